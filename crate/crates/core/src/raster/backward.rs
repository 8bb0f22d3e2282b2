use nalgebra::Vector2;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{build_covariance, GaussianScene, ShDegree, MIN_LOG_SCALE, SH_C0};
use crate::image::Image;
use crate::math::{normalize_quat, quat_rotation_vjp, rotation_of_unit, Mat2, Mat3, Quat, Vec3};

use super::forward::RenderOutput;
use super::project::{projection_jacobian, Splat2D};
use super::ALPHA_MAX;

/// Per-Gaussian gradients of a scalar loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffers {
    pub position: Vec<Vec3>,
    pub rotation: Vec<Quat>,
    pub log_scale: Vec<Vec3>,
    pub opacity_logit: Vec<f64>,
    pub color_dc: Vec<Vec3>,
    /// `|dL/d color_dc|` per Gaussian.
    pub color_grad_norm: Vec<f64>,
    /// Norm of the gradient w.r.t. the projected center, in normalized
    /// device units (pixel gradient scaled by half the image size). When
    /// several views are merged this is the sum of per-view norms.
    pub pos2d_grad_norm: Vec<f64>,
}

impl GradBuffers {
    pub fn zeros(n: usize) -> Self {
        Self {
            position: vec![Vec3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            log_scale: vec![Vec3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color_dc: vec![Vec3::zeros(); n],
            color_grad_norm: vec![0.0; n],
            pos2d_grad_norm: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    /// Adds the gradients of another view's loss term.
    pub fn merge(&mut self, other: &GradBuffers) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::InvalidState(format!(
                "merging gradient buffers of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        for i in 0..self.len() {
            self.position[i] += other.position[i];
            for k in 0..4 {
                self.rotation[i][k] += other.rotation[i][k];
            }
            self.log_scale[i] += other.log_scale[i];
            self.opacity_logit[i] += other.opacity_logit[i];
            self.color_dc[i] += other.color_dc[i];
            self.color_grad_norm[i] = self.color_dc[i].norm();
            self.pos2d_grad_norm[i] += other.pos2d_grad_norm[i];
        }
        Ok(())
    }

    /// The 14 parameter gradients of Gaussian `i` in optimizer order:
    /// position, rotation, log_scale, opacity_logit, color_dc.
    pub fn flat(&self, i: usize) -> [f64; 14] {
        let p = &self.position[i];
        let r = &self.rotation[i];
        let s = &self.log_scale[i];
        let c = &self.color_dc[i];
        [
            p.x,
            p.y,
            p.z,
            r[0],
            r[1],
            r[2],
            r[3],
            s.x,
            s.y,
            s.z,
            self.opacity_logit[i],
            c.x,
            c.y,
            c.z,
        ]
    }

    pub fn is_nonzero(&self, i: usize) -> bool {
        self.flat(i).iter().any(|&v| v != 0.0)
    }

    pub fn scale(&mut self, k: f64) {
        for i in 0..self.len() {
            self.position[i] *= k;
            for v in &mut self.rotation[i] {
                *v *= k;
            }
            self.log_scale[i] *= k;
            self.opacity_logit[i] *= k;
            self.color_dc[i] *= k;
            self.color_grad_norm[i] *= k.abs();
            self.pos2d_grad_norm[i] *= k.abs();
        }
    }
}

/// Gradients w.r.t. one splat's screen-space quantities.
#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    rgb: [f64; 3],
    depth: f64,
    mean: [f64; 2],
    /// d/d(a, b, c) of the conic `[[a, b], [b, c]]` with `b` counted once.
    conic: [f64; 3],
    opacity: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..3 {
            self.rgb[k] += o.rgb[k];
            self.conic[k] += o.conic[k];
        }
        self.depth += o.depth;
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        self.opacity += o.opacity;
    }
}

/// Backpropagates image-space loss gradients through a forward render.
///
/// `dl_dcolor` is H×W×3; `dl_ddepth`, when given, is H×W×1.
pub fn backward(
    scene: &GaussianScene,
    cam: &Camera,
    fwd: &RenderOutput,
    dl_dcolor: &Image,
    dl_ddepth: Option<&Image>,
) -> Result<GradBuffers> {
    if fwd.camera != *cam || fwd.scene_revision != scene.revision() || fwd.scene_len != scene.len()
    {
        return Err(Error::InvalidState(
            "forward render does not match this scene revision and camera".into(),
        ));
    }
    if fwd.degree != ShDegree::Diffuse {
        return invalid("backward supports diffuse (degree 0) renders only");
    }
    if dl_dcolor.width != fwd.width || dl_dcolor.height != fwd.height || dl_dcolor.channels != 3 {
        return invalid("color gradient shape does not match the render");
    }
    if let Some(d) = dl_ddepth {
        if d.width != fwd.width || d.height != fwd.height || d.channels != 1 {
            return invalid("depth gradient shape does not match the render");
        }
    }

    let splats = &fwd.splats;
    let per_tile: Vec<Vec<SplatGrad>> = fwd
        .tiles
        .par_iter()
        .map(|tile| {
            let mut local = vec![SplatGrad::default(); tile.splats.len()];
            for p in 0..tile.w * tile.h {
                let x = tile.x0 + p % tile.w;
                let y = tile.y0 + p / tile.w;
                let i = y * fwd.width + x;
                let gc = [
                    dl_dcolor.data[3 * i],
                    dl_dcolor.data[3 * i + 1],
                    dl_dcolor.data[3 * i + 2],
                ];
                let gd = dl_ddepth.map_or(0.0, |d| d.data[i]);
                if gc == [0.0; 3] && gd == 0.0 {
                    continue;
                }
                let list = &tile.contribs[tile.offsets[p] as usize..tile.offsets[p + 1] as usize];
                let (px, py) = (x as f64, y as f64);
                let mut t = fwd.final_transmittance.data[i];
                let mut behind = 0.0;
                for &l in list.iter().rev() {
                    let s = &splats[tile.splats[l as usize] as usize];
                    let dx = px - s.mean2d.x;
                    let dy = py - s.mean2d.y;
                    let (ca, cb, cc) = (s.conic[(0, 0)], s.conic[(0, 1)], s.conic[(1, 1)]);
                    let q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy;
                    let gauss = (-0.5 * q).exp();
                    let raw = s.base_opacity * gauss;
                    let a = raw.min(ALPHA_MAX);
                    let t_i = t / (1.0 - a);
                    let w = a * t_i;
                    let g = &mut local[l as usize];
                    for k in 0..3 {
                        g.rgb[k] += gc[k] * w;
                    }
                    g.depth += gd * w;
                    let own = gc[0] * s.rgb.x + gc[1] * s.rgb.y + gc[2] * s.rgb.z + gd * s.depth;
                    let dl_da = t_i * own - behind / (1.0 - a);
                    behind += own * w;
                    t = t_i;
                    if raw < ALPHA_MAX {
                        g.opacity += dl_da * gauss;
                        let dl_dq = -0.5 * gauss * s.base_opacity * dl_da;
                        // q = δᵀ A δ with δ = p - mean
                        g.mean[0] += dl_dq * -2.0 * (ca * dx + cb * dy);
                        g.mean[1] += dl_dq * -2.0 * (cb * dx + cc * dy);
                        g.conic[0] += dl_dq * dx * dx;
                        g.conic[1] += dl_dq * 2.0 * dx * dy;
                        g.conic[2] += dl_dq * dy * dy;
                    }
                }
            }
            local
        })
        .collect();

    // Fixed-order reduction keeps results independent of the thread schedule.
    let mut splat_grads = vec![SplatGrad::default(); splats.len()];
    for (tile, local) in fwd.tiles.iter().zip(per_tile.iter()) {
        for (l, g) in local.iter().enumerate() {
            splat_grads[tile.splats[l] as usize].add(g);
        }
    }

    let rot = cam.rotation();
    let per_splat: Vec<(usize, GaussianGrad)> = splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(s, sg)| (s.gaussian_id, gaussian_grad(scene, cam, &rot, s, sg)))
        .collect();

    let mut out = GradBuffers::zeros(scene.len());
    let half = Vector2::new(fwd.width as f64 * 0.5, fwd.height as f64 * 0.5);
    for (id, gg) in per_splat {
        out.position[id] = gg.position;
        out.rotation[id] = gg.rotation;
        out.log_scale[id] = gg.log_scale;
        out.opacity_logit[id] = gg.opacity_logit;
        out.color_dc[id] = gg.color_dc;
        out.color_grad_norm[id] = gg.color_dc.norm();
        out.pos2d_grad_norm[id] = gg.mean2d.component_mul(&half).norm();
    }
    Ok(out)
}

struct GaussianGrad {
    position: Vec3,
    rotation: Quat,
    log_scale: Vec3,
    opacity_logit: f64,
    color_dc: Vec3,
    mean2d: Vector2<f64>,
}

fn gaussian_grad(
    scene: &GaussianScene,
    cam: &Camera,
    w: &Mat3,
    s: &Splat2D,
    sg: &SplatGrad,
) -> GaussianGrad {
    let g = &scene.gaussians()[s.gaussian_id];
    let alpha = s.base_opacity;

    let mut color_dc = Vec3::zeros();
    for k in 0..3 {
        if s.rgb_active[k] {
            color_dc[k] = sg.rgb[k] * SH_C0;
        }
    }
    let opacity_logit = sg.opacity * alpha * (1.0 - alpha);

    let t = s.cam_point;
    let (x, y, z) = (t.x, t.y, t.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let mut dt = Vec3::zeros();

    // mean2d = (fx x/z + cx, fy y/z + cy)
    let dm = Vector2::new(sg.mean[0], sg.mean[1]);
    dt.x += dm.x * fx / z;
    dt.y += dm.y * fy / z;
    dt.z += -dm.x * fx * x / (z * z) - dm.y * fy * y / (z * z);
    dt.z += sg.depth;

    // conic = cov2⁻¹  =>  dL/dcov2 = -A G A with G the symmetric conic gradient.
    let ga = Mat2::new(
        sg.conic[0],
        0.5 * sg.conic[1],
        0.5 * sg.conic[1],
        sg.conic[2],
    );
    let dcov2 = -(s.conic * ga * s.conic);

    let cov3 = build_covariance(g);
    let m = w * cov3 * w.transpose();
    let j = projection_jacobian(cam, &t);
    let dm3 = j.transpose() * dcov2 * j;
    let dj = 2.0 * dcov2 * j * m;
    let iz2 = 1.0 / (z * z);
    let iz3 = iz2 / z;
    dt.x += dj[(0, 2)] * -fx * iz2;
    dt.y += dj[(1, 2)] * -fy * iz2;
    dt.z += dj[(0, 0)] * -fx * iz2
        + dj[(0, 2)] * 2.0 * fx * x * iz3
        + dj[(1, 1)] * -fy * iz2
        + dj[(1, 2)] * 2.0 * fy * y * iz3;

    let dsigma = w.transpose() * dm3 * w;
    let dsigma = (dsigma + dsigma.transpose()) * 0.5;

    let q = normalize_quat(&g.rotation).unwrap_or(crate::math::IDENTITY_QUAT);
    let r = rotation_of_unit(&q);
    let scale = g.scale();
    let l = r * Mat3::from_diagonal(&scale);
    let dl = 2.0 * dsigma * l;
    let mut dr = Mat3::zeros();
    let mut log_scale = Vec3::zeros();
    for jdx in 0..3 {
        let mut ds = 0.0;
        for i in 0..3 {
            dr[(i, jdx)] = dl[(i, jdx)] * scale[jdx];
            ds += dl[(i, jdx)] * r[(i, jdx)];
        }
        if g.log_scale[jdx] > MIN_LOG_SCALE {
            log_scale[jdx] = ds * scale[jdx];
        }
    }
    let rotation = quat_rotation_vjp(&g.rotation, &dr);
    let position = w.transpose() * dt;

    GaussianGrad {
        position,
        rotation,
        log_scale,
        opacity_logit,
        color_dc,
        mean2d: dm,
    }
}
