//! The stylization objective: reference reconstruction, depth, pseudo-view,
//! template-correspondence and patch-color terms, and their weighted sum.
//!
//! Every `*_grad` function returns the loss value together with its gradient
//! with respect to the first argument.

use serde::{Deserialize, Serialize};

use super::features::{grid_size, FeatureMap, STRIDE};
use super::matching::GuidanceIndexMap;
use super::pseudo_view::PseudoView;
use crate::error::{invalid, Result};
use crate::image::Image;

const NORM_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub rec: f64,
    pub depth: f64,
    pub view: f64,
    pub tcm: f64,
    pub color: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rec: 1.0,
            depth: 10.0,
            view: 2.0,
            tcm: 1.0,
            color: 15.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rec, self.depth, self.view, self.tcm, self.color];
        if all.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return invalid("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub rec: f64,
    pub depth: f64,
    pub view: f64,
    pub tcm: f64,
    pub color: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.rec * parts.rec
        + w.depth * parts.depth
        + w.view * parts.view
        + w.tcm * parts.tcm
        + w.color * parts.color
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same(a: &Image, b: &Image, what: &str) -> Result<()> {
    if !a.same_shape(b) {
        return invalid(format!(
            "{what}: shapes {}x{}x{} and {}x{}x{} differ",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        ));
    }
    Ok(())
}

fn mean_l1_grad(a: &Image, b: &Image) -> (f64, Image) {
    let n = a.data.len().max(1) as f64;
    let mut g = Image::new(a.width, a.height, a.channels);
    let mut loss = 0.0;
    for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        loss += (x - y).abs();
        g.data[i] = sign(x - y) / n;
    }
    (loss / n, g)
}

/// Mean absolute error between the reference-view render and the style
/// reference.
pub fn loss_rec_grad(render: &Image, style_ref: &Image) -> Result<(f64, Image)> {
    check_same(render, style_ref, "reconstruction loss")?;
    Ok(mean_l1_grad(render, style_ref))
}

pub fn loss_rec(render: &Image, style_ref: &Image) -> Result<f64> {
    Ok(loss_rec_grad(render, style_ref)?.0)
}

/// Mean absolute depth difference over all pixels.
pub fn loss_depth_grad(depth: &Image, content_depth: &Image) -> Result<(f64, Image)> {
    check_same(depth, content_depth, "depth loss")?;
    Ok(mean_l1_grad(depth, content_depth))
}

pub fn loss_depth(depth: &Image, content_depth: &Image) -> Result<f64> {
    Ok(loss_depth_grad(depth, content_depth)?.0)
}

/// Mean over masked pixels of the channel-averaged absolute error against
/// the pseudo view; zero for an empty mask.
pub fn loss_view_grad(render: &Image, pv: &PseudoView) -> Result<(f64, Image)> {
    check_same(render, &pv.image, "pseudo-view loss")?;
    let mut g = Image::new(render.width, render.height, 3);
    let count = pv.coverage();
    if count == 0 {
        return Ok((0.0, g));
    }
    let scale = 1.0 / (3.0 * count as f64);
    let mut loss = 0.0;
    for (p, &m) in pv.mask.iter().enumerate() {
        if !m {
            continue;
        }
        for c in 0..3 {
            let d = render.data[3 * p + c] - pv.image.data[3 * p + c];
            loss += d.abs();
            g.data[3 * p + c] = sign(d) * scale;
        }
    }
    Ok((loss * scale, g))
}

pub fn loss_view(render: &Image, pv: &PseudoView) -> Result<f64> {
    Ok(loss_view_grad(render, pv)?.0)
}

/// Mean cosine distance between the stylized features and the reference
/// features gathered through the guidance map.
pub fn loss_tcm_grad(
    stylized: &FeatureMap,
    guidance: &GuidanceIndexMap,
    style_ref: &FeatureMap,
) -> Result<(f64, FeatureMap)> {
    if stylized.width != guidance.width || stylized.height != guidance.height {
        return invalid("stylized features do not match the guidance grid");
    }
    if style_ref.width != guidance.ref_width || style_ref.height != guidance.ref_height {
        return invalid("reference features do not match the guidance target grid");
    }
    if stylized.channels != style_ref.channels {
        return invalid("feature channel mismatch in TCM loss");
    }
    let n = stylized.locations();
    let nr = style_ref.locations();
    let ch = stylized.channels;
    let mut grad = FeatureMap {
        data: vec![0.0; stylized.data.len()],
        ..stylized.clone()
    };
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    for loc in 0..n {
        let (tx, ty) = guidance.targets[loc];
        let rloc = ty * style_ref.width + tx;
        let f: Vec<f64> = (0..ch).map(|c| stylized.data[c * n + loc]).collect();
        let g: Vec<f64> = (0..ch).map(|c| style_ref.data[c * nr + rloc]).collect();
        let nf_raw = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nf = nf_raw.max(NORM_FLOOR);
        let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
        let dot: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        let cos = dot / (nf * ng);
        loss += 1.0 - cos;
        for c in 0..ch {
            let radial = if nf_raw >= NORM_FLOOR {
                cos * f[c] / (nf * nf)
            } else {
                0.0
            };
            grad.data[c * n + loc] = -(g[c] / (nf * ng) - radial) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

pub fn loss_tcm(
    stylized: &FeatureMap,
    guidance: &GuidanceIndexMap,
    style_ref: &FeatureMap,
) -> Result<f64> {
    Ok(loss_tcm_grad(stylized, guidance, style_ref)?.0)
}

fn patch_mean(img: &Image, cx: usize, cy: usize) -> ([f64; 3], usize) {
    let mut s = [0.0; 3];
    let mut n = 0;
    for y in cy * STRIDE..((cy + 1) * STRIDE).min(img.height) {
        for x in cx * STRIDE..((cx + 1) * STRIDE).min(img.width) {
            for c in 0..3 {
                s[c] += img.get(x, y, c);
            }
            n += 1;
        }
    }
    (s.map(|v| v / n as f64), n)
}

/// Mean squared distance between the average color of each stride-8 patch
/// of the render and the matched patch of the style reference.
pub fn loss_color_grad(
    render: &Image,
    style_ref: &Image,
    guidance: &GuidanceIndexMap,
) -> Result<(f64, Image)> {
    if grid_size(render.width, render.height) != (guidance.width, guidance.height) {
        return invalid("render does not match the guidance grid");
    }
    if grid_size(style_ref.width, style_ref.height) != (guidance.ref_width, guidance.ref_height) {
        return invalid("style reference does not match the guidance target grid");
    }
    let locs = guidance.width * guidance.height;
    let mut g = Image::new(render.width, render.height, render.channels);
    if locs == 0 {
        return Ok((0.0, g));
    }
    let mut loss = 0.0;
    for cy in 0..guidance.height {
        for cx in 0..guidance.width {
            let (mr, n) = patch_mean(render, cx, cy);
            let (tx, ty) = guidance.target(cx, cy);
            let (ms, _) = patch_mean(style_ref, tx, ty);
            let d = [mr[0] - ms[0], mr[1] - ms[1], mr[2] - ms[2]];
            loss += d.iter().map(|v| v * v).sum::<f64>();
            for y in cy * STRIDE..((cy + 1) * STRIDE).min(render.height) {
                for x in cx * STRIDE..((cx + 1) * STRIDE).min(render.width) {
                    for c in 0..3 {
                        let i = render.index(x, y) + c;
                        g.data[i] = 2.0 * d[c] / (n as f64 * locs as f64);
                    }
                }
            }
        }
    }
    Ok((loss / locs as f64, g))
}

pub fn loss_color(render: &Image, style_ref: &Image, guidance: &GuidanceIndexMap) -> Result<f64> {
    Ok(loss_color_grad(render, style_ref, guidance)?.0)
}
