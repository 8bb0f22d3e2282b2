//! Central finite differences against the analytic backward pass.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::{GaussianScene, ShDegree};
use crate::image::Image;
use crate::raster::{backward, render, RenderOutput};

pub const PARAM_NAMES: [&str; 14] = [
    "position.x",
    "position.y",
    "position.z",
    "rotation.w",
    "rotation.x",
    "rotation.y",
    "rotation.z",
    "log_scale.x",
    "log_scale.y",
    "log_scale.z",
    "opacity_logit",
    "color_dc.r",
    "color_dc.g",
    "color_dc.b",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Pass iff every relative error is below this.
    pub tol: f64,
    /// Denominator floor for relative errors; gradients smaller than this
    /// are compared in absolute terms.
    pub abs_floor: f64,
    /// Smallest step tried when the stencil straddles a kink (opacity floor,
    /// clamp or early termination switching inside `[x-h, x+h]`).
    pub min_step: f64,
    /// Weight of the depth L1 term in the checked loss.
    pub depth_weight: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-3,
            abs_floor: 1e-6,
            min_step: 1e-7,
            depth_weight: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub gaussian: usize,
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checked: usize,
    /// Parameters whose default-step stencil crossed a kink and were
    /// re-measured with a smaller step.
    pub refined: usize,
    pub max_rel_error: f64,
    pub worst: Option<ParamError>,
    pub tol: f64,
    pub passed: bool,
}

/// Loss used by the check: mean L1 on color plus weighted mean L1 on depth.
pub fn l1_image_loss(
    color: &Image,
    depth: &Image,
    target_color: &Image,
    target_depth: &Image,
    depth_weight: f64,
) -> (f64, Image, Image) {
    let nc = color.data.len() as f64;
    let nd = depth.data.len() as f64;
    let mut gc = Image::new(color.width, color.height, 3);
    let mut gd = Image::new(depth.width, depth.height, 1);
    let mut loss = 0.0;
    for (i, (a, b)) in color.data.iter().zip(&target_color.data).enumerate() {
        loss += (a - b).abs() / nc;
        gc.data[i] = signum0(a - b) / nc;
    }
    for (i, (a, b)) in depth.data.iter().zip(&target_depth.data).enumerate() {
        loss += depth_weight * (a - b).abs() / nd;
        gd.data[i] = depth_weight * signum0(a - b) / nd;
    }
    (loss, gc, gd)
}

pub(crate) fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn get_param(scene: &GaussianScene, i: usize, k: usize) -> f64 {
    let g = &scene.gaussians()[i];
    match k {
        0..=2 => g.position[k],
        3..=6 => g.rotation[k - 3],
        7..=9 => g.log_scale[k - 7],
        10 => g.opacity_logit,
        _ => g.color_dc[k - 11],
    }
}

pub(crate) fn set_param(scene: &mut GaussianScene, i: usize, k: usize, v: f64) {
    let g = &mut scene.gaussians_mut()[i];
    match k {
        0..=2 => g.position[k] = v,
        3..=6 => g.rotation[k - 3] = v,
        7..=9 => g.log_scale[k - 7] = v,
        10 => g.opacity_logit = v,
        _ => g.color_dc[k - 11] = v,
    }
}

/// Value of a scalar image objective and its gradients with respect to the
/// rendered color and (optionally) depth.
#[derive(Clone, Debug)]
pub struct ImageGrad {
    pub loss: f64,
    pub d_color: Image,
    pub d_depth: Option<Image>,
}

/// Checks every parameter of every Gaussian of a diffuse scene against the
/// L1 image loss.
pub fn gradcheck(
    scene: &GaussianScene,
    cam: &Camera,
    target_color: &Image,
    target_depth: &Image,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport> {
    let fwd = render(scene, cam, ShDegree::Diffuse)?;
    let (_, gc, gd) = l1_image_loss(
        &fwd.color,
        &fwd.depth,
        target_color,
        target_depth,
        cfg.depth_weight,
    );

    // The L1 loss with residual signs frozen at the base point: same value
    // and gradient there, but without the kinks of residuals crossing zero
    // inside the stencil, which would swamp the renderer's own behavior.
    let frozen = |out: &RenderOutput| -> Result<ImageGrad> {
        let mut l = 0.0;
        for (i, g) in gc.data.iter().enumerate() {
            l += g * (out.color.data[i] - target_color.data[i]);
        }
        for (i, g) in gd.data.iter().enumerate() {
            l += g * (out.depth.data[i] - target_depth.data[i]);
        }
        Ok(ImageGrad {
            loss: l,
            d_color: gc.clone(),
            d_depth: Some(gd.clone()),
        })
    };
    gradcheck_objective(scene, cam, frozen, cfg)
}

/// Checks the gradient of an arbitrary objective of the diffuse render,
/// propagated through [`backward`], against finite differences.
pub fn gradcheck_objective<F>(
    scene: &GaussianScene,
    cam: &Camera,
    objective: F,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport>
where
    F: Fn(&RenderOutput) -> Result<ImageGrad>,
{
    let fwd = render(scene, cam, ShDegree::Diffuse)?;
    let base = objective(&fwd)?;
    let grads = backward(scene, cam, &fwd, &base.d_color, base.d_depth.as_ref())?;
    let loss_of = |s: &GaussianScene| -> Result<f64> {
        Ok(objective(&render(s, cam, ShDegree::Diffuse)?)?.loss)
    };

    let mut work = scene.clone();
    let mut report = GradcheckReport {
        checked: 0,
        refined: 0,
        max_rel_error: 0.0,
        worst: None,
        tol: cfg.tol,
        passed: true,
    };
    for i in 0..scene.len() {
        let analytic = grads.flat(i);
        for k in 0..14 {
            let x0 = get_param(scene, i, k);
            let mut central = |h: f64| -> Result<f64> {
                set_param(&mut work, i, k, x0 + h);
                let fp = loss_of(&work)?;
                set_param(&mut work, i, k, x0 - h);
                let fm = loss_of(&work)?;
                set_param(&mut work, i, k, x0);
                Ok((fp - fm) / (2.0 * h))
            };
            // A smooth loss gives central estimates at h and h/2 that agree to
            // O(h²); a jump or kink inside the stencil makes them disagree, in
            // which case the step shrinks until the pair agrees.
            let mut h = cfg.step;
            let mut c = central(h)?;
            let numeric = loop {
                let c_half = central(h * 0.5)?;
                if (c - c_half).abs() <= 0.25 * cfg.tol * c.abs().max(cfg.abs_floor)
                    || h * 0.1 < cfg.min_step
                {
                    break c;
                }
                if h == cfg.step {
                    report.refined += 1;
                }
                h *= 0.1;
                c = central(h)?;
            };
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.abs_floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(ParamError {
                    gaussian: i,
                    param: PARAM_NAMES[k].to_string(),
                    analytic: a,
                    numeric,
                    rel_error: rel,
                    step: h,
                });
            }
        }
    }
    report.passed = report.max_rel_error < cfg.tol;
    Ok(report)
}
