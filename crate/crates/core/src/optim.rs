//! Adam over the per-Gaussian parameter groups.

use serde::{Deserialize, Serialize};

use crate::control::Remap;
use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianScene;
use crate::math::normalize_quat;
use crate::raster::GradBuffers;

pub const PARAMS_PER_GAUSSIAN: usize = 14;

/// Per-group step sizes. The position rate is in world units and is usually
/// scaled by the scene extent (see [`LearningRates::scaled_to_extent`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub opacity_logit: f64,
    pub color_dc: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            rotation: 1e-3,
            log_scale: 5e-3,
            opacity_logit: 5e-2,
            color_dc: 2.5e-2,
        }
    }
}

impl LearningRates {
    pub fn scaled_to_extent(&self, extent: f64) -> Self {
        Self {
            position: self.position * extent,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position,
            self.rotation,
            self.log_scale,
            self.opacity_logit,
            self.color_dc,
        ];
        if all.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return invalid("learning rates must be positive and finite");
        }
        Ok(())
    }

    fn per_param(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut out = [0.0; PARAMS_PER_GAUSSIAN];
        out[0..3].fill(self.position);
        out[3..7].fill(self.rotation);
        out[7..10].fill(self.log_scale);
        out[10] = self.opacity_logit;
        out[11..14].fill(self.color_dc);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    v: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            step: 0,
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Realigns moments after a control event; new Gaussians start at zero.
    pub fn remap(&mut self, remap: &Remap) {
        let pick = |buf: &[[f64; PARAMS_PER_GAUSSIAN]]| -> Vec<[f64; PARAMS_PER_GAUSSIAN]> {
            remap
                .iter()
                .map(|o| o.map_or([0.0; PARAMS_PER_GAUSSIAN], |i| buf[i]))
                .collect()
        };
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }

    /// One bias-corrected Adam update. Quaternions that moved are
    /// renormalized.
    pub fn update(
        &mut self,
        scene: &mut GaussianScene,
        grads: &GradBuffers,
        lrs: &LearningRates,
    ) -> Result<()> {
        if grads.len() != scene.len() || self.len() != scene.len() {
            return Err(Error::InvalidState(format!(
                "optimizer tracks {} gaussians, gradients {}, scene {}",
                self.len(),
                grads.len(),
                scene.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = lrs.per_param();
        for (i, g) in scene.gaussians_mut().iter_mut().enumerate() {
            let grad = grads.flat(i);
            let mut delta = [0.0; PARAMS_PER_GAUSSIAN];
            for k in 0..PARAMS_PER_GAUSSIAN {
                let m = &mut self.m[i][k];
                let v = &mut self.v[i][k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * grad[k];
                *v = self.beta2 * *v + (1.0 - self.beta2) * grad[k] * grad[k];
                let mh = *m / bc1;
                let vh = *v / bc2;
                delta[k] = lr[k] * mh / (vh.sqrt() + self.eps);
            }
            for a in 0..3 {
                g.position[a] -= delta[a];
                g.log_scale[a] -= delta[7 + a];
                g.color_dc[a] -= delta[11 + a];
            }
            g.opacity_logit -= delta[10];
            if delta[3..7].iter().any(|&d| d != 0.0) {
                for a in 0..4 {
                    g.rotation[a] -= delta[3 + a];
                }
                g.rotation = normalize_quat(&g.rotation)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::math::{quat_norm, Vec3};
    use crate::synth::{random_gaussian, seeded};

    fn lrs() -> LearningRates {
        LearningRates {
            position: 0.01,
            rotation: 0.02,
            log_scale: 0.03,
            opacity_logit: 0.04,
            color_dc: 0.05,
        }
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut rng = seeded(31);
        let mut s = GaussianScene::new((0..5).map(|_| random_gaussian(&mut rng, false)).collect());
        let before = s.gaussians().to_vec();
        let mut opt = Adam::new(5);
        opt.update(&mut s, &GradBuffers::zeros(5), &lrs()).unwrap();
        assert_eq!(s.gaussians(), &before[..]);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut s = GaussianScene::new(vec![random_gaussian(&mut seeded(32), false)]);
        let mut g = GradBuffers::zeros(1);
        g.opacity_logit[0] = -0.37;
        let mut opt = Adam::new(1);
        let lr = lrs();
        for _ in 0..200 {
            let before = s.gaussians()[0].opacity_logit;
            opt.update(&mut s, &g, &lr).unwrap();
            let step = s.gaussians()[0].opacity_logit - before;
            assert!((step - lr.opacity_logit).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = seeded(33);
        let n = 4;
        let mut s = GaussianScene::new((0..n).map(|_| random_gaussian(&mut rng, false)).collect());
        let lr = lrs();
        let lr_flat = lr.per_param();
        let mut opt = Adam::new(n);
        // Independent scalar re-implementation on a flat parameter copy.
        let mut theta: Vec<[f64; 14]> = s.gaussians().iter().map(flatten).collect();
        let mut m = vec![[0.0; 14]; n];
        let mut v = vec![[0.0; 14]; n];
        for step in 1..=30 {
            let mut g = GradBuffers::zeros(n);
            for i in 0..n {
                g.position[i] = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                g.log_scale[i] = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                g.color_dc[i] = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                g.opacity_logit[i] = rng.gen_range(-1.0..1.0);
                g.rotation[i] = [0, 1, 2, 3].map(|_| rng.gen_range(-1.0..1.0));
            }
            opt.update(&mut s, &g, &lr).unwrap();
            for i in 0..n {
                let gf = g.flat(i);
                for k in 0..14 {
                    m[i][k] = 0.9 * m[i][k] + 0.1 * gf[k];
                    v[i][k] = 0.999 * v[i][k] + 0.001 * gf[k] * gf[k];
                    let mh = m[i][k] / (1.0 - 0.9f64.powi(step));
                    let vh = v[i][k] / (1.0 - 0.999f64.powi(step));
                    theta[i][k] -= lr_flat[k] * mh / (vh.sqrt() + 1e-15);
                }
                let qn = (3..7)
                    .map(|k| theta[i][k] * theta[i][k])
                    .sum::<f64>()
                    .sqrt();
                for k in 3..7 {
                    theta[i][k] /= qn;
                }
            }
        }
        for i in 0..n {
            let got = flatten(&s.gaussians()[i]);
            for k in 0..14 {
                assert!((got[k] - theta[i][k]).abs() < 1e-9, "g{i} p{k}");
            }
            assert!((quat_norm(&s.gaussians()[i].rotation) - 1.0).abs() < 1e-12);
        }
    }

    fn flatten(g: &crate::gaussian::Gaussian3D) -> [f64; 14] {
        let (p, r, l, c) = (g.position, g.rotation, g.log_scale, g.color_dc);
        [
            p.x,
            p.y,
            p.z,
            r[0],
            r[1],
            r[2],
            r[3],
            l.x,
            l.y,
            l.z,
            g.opacity_logit,
            c.x,
            c.y,
            c.z,
        ]
    }

    #[test]
    fn remap_keeps_survivor_moments_and_zeroes_new() {
        let mut rng = seeded(34);
        let mut s = GaussianScene::new((0..3).map(|_| random_gaussian(&mut rng, false)).collect());
        let mut opt = Adam::new(3);
        let mut g = GradBuffers::zeros(3);
        g.opacity_logit = vec![1.0, 2.0, 3.0];
        opt.update(&mut s, &g, &lrs()).unwrap();
        opt.remap(&vec![Some(2), Some(0), None]);
        assert_eq!(opt.len(), 3);
        assert!((opt.m[0][10] - 0.3).abs() < 1e-15);
        assert!((opt.m[1][10] - 0.1).abs() < 1e-15);
        assert_eq!(opt.m[2], [0.0; 14]);
        assert_eq!(opt.v[2], [0.0; 14]);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let mut s = GaussianScene::new(vec![random_gaussian(&mut seeded(35), false)]);
        let mut opt = Adam::new(2);
        assert!(opt.update(&mut s, &GradBuffers::zeros(1), &lrs()).is_err());
    }
}
