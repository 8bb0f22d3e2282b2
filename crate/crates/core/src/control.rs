//! Adaptive density control.
//!
//! The texture-guided path accumulates color-gradient norms, selects
//! Gaussians whose mean norm exceeds a decaying threshold and replaces each
//! with nine smaller children. The positional path selects on projected
//! position gradients instead and exists for comparison and pretraining.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{Gaussian3D, GaussianScene};
use crate::math::{quat_to_rotation, sigmoid, Vec3};
use crate::raster::GradBuffers;

/// For every Gaussian after a control operation, the index it had before,
/// or `None` when it was created by the operation.
pub type Remap = Vec<Option<usize>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub warmup_iters: usize,
    pub interval_iters: usize,
    /// Control stops after this fraction of the total iterations.
    pub stop_fraction: f64,
    pub threshold_start: f64,
    pub threshold_end: f64,
    /// Positional-gradient threshold of the baseline selection (NDC units).
    pub pos_threshold: f64,
    pub prune_opacity: f64,
    /// Upper bound on the total Gaussian count; splits that would exceed it
    /// are skipped.
    pub max_gaussians: Option<usize>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 100,
            interval_iters: 100,
            stop_fraction: 0.5,
            threshold_start: 1e-5,
            threshold_end: 5e-6,
            pos_threshold: 2e-4,
            prune_opacity: 0.005,
            max_gaussians: None,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_start >= self.threshold_end && self.threshold_end > 0.0) {
            return invalid("control thresholds must satisfy start >= end > 0");
        }
        if !(self.stop_fraction > 0.0 && self.stop_fraction <= 1.0) {
            return invalid("stop_fraction must lie in (0, 1]");
        }
        if self.interval_iters == 0 {
            return invalid("interval_iters must be at least 1");
        }
        if !(0.0..1.0).contains(&self.prune_opacity) {
            return invalid("prune_opacity must lie in [0, 1)");
        }
        Ok(())
    }

    /// Last iteration at which control may fire.
    pub fn stop_iter(&self, total_iters: usize) -> usize {
        (self.stop_fraction * total_iters as f64).floor() as usize
    }

    /// Whether statistics are collected after (1-based) iteration `iter`.
    pub fn accumulates_at(&self, iter: usize, total_iters: usize) -> bool {
        iter > self.warmup_iters && iter <= self.stop_iter(total_iters)
    }

    /// Whether a control event fires after (1-based) iteration `iter`.
    pub fn fires_at(&self, iter: usize, total_iters: usize) -> bool {
        self.accumulates_at(iter, total_iters)
            && (iter - self.warmup_iters) % self.interval_iters == 0
    }
}

/// Which statistic drives densification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    TextureGuided,
    Positional,
    None,
}

/// One logged control event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub iter: usize,
    pub selected: usize,
    pub new_count: usize,
    pub threshold: f64,
    pub split: usize,
    pub skipped: usize,
    pub pruned: usize,
}

/// Adds one iteration's gradient norms to the scene statistics.
pub fn accumulate(scene: &mut GaussianScene, grads: &GradBuffers) -> Result<()> {
    if grads.len() != scene.len() || !scene.stats_consistent() {
        return Err(Error::InvalidState(format!(
            "gradient buffers for {} gaussians, scene has {}",
            grads.len(),
            scene.len()
        )));
    }
    for i in 0..scene.len() {
        scene.color_grad_accum[i] += grads.color_grad_norm[i];
        scene.pos_grad_accum[i] += grads.pos2d_grad_norm[i];
        if grads.is_nonzero(i) || grads.pos2d_grad_norm[i] != 0.0 {
            scene.contrib_count[i] += 1;
        }
    }
    Ok(())
}

/// Color-gradient threshold at `iter`: linear from `threshold_start` at the
/// end of warm-up to `threshold_end` at the control stop, constant outside.
pub fn threshold_at(iter: usize, total_iters: usize, cfg: &ControlConfig) -> f64 {
    let start = cfg.warmup_iters as f64;
    let stop = cfg.stop_iter(total_iters) as f64;
    let it = iter as f64;
    if it <= start {
        return cfg.threshold_start;
    }
    if it >= stop {
        return cfg.threshold_end;
    }
    let t = (it - start) / (stop - start);
    cfg.threshold_start + t * (cfg.threshold_end - cfg.threshold_start)
}

fn mean_stat(accum: &[f64], count: &[u32], i: usize) -> f64 {
    accum[i] / count[i].max(1) as f64
}

/// Indices whose mean color-gradient norm exceeds `threshold`.
pub fn select_texture_guided(scene: &GaussianScene, threshold: f64) -> Vec<usize> {
    (0..scene.len())
        .filter(|&i| mean_stat(&scene.color_grad_accum, &scene.contrib_count, i) > threshold)
        .collect()
}

/// Indices whose mean projected-position gradient norm exceeds `threshold`.
pub fn select_positional_baseline(scene: &GaussianScene, threshold: f64) -> Vec<usize> {
    (0..scene.len())
        .filter(|&i| mean_stat(&scene.pos_grad_accum, &scene.contrib_count, i) > threshold)
        .collect()
}

/// Orders a selection by descending statistic, ties by index, so budget caps
/// keep the strongest candidates.
pub fn rank_selection(
    scene: &GaussianScene,
    mut indices: Vec<usize>,
    mode: ControlMode,
) -> Vec<usize> {
    let accum = match mode {
        ControlMode::Positional => &scene.pos_grad_accum,
        _ => &scene.color_grad_accum,
    };
    indices.sort_by(|&a, &b| {
        mean_stat(accum, &scene.contrib_count, b)
            .total_cmp(&mean_stat(accum, &scene.contrib_count, a))
            .then(a.cmp(&b))
    });
    indices
}

/// The nine children replacing `parent`: one at the center and one per
/// octant at `R·diag(σ)·(±½, ±½, ±½)`, each with σ/8 per axis.
pub fn split_children(parent: &Gaussian3D) -> Result<[Gaussian3D; 9]> {
    let r = quat_to_rotation(&parent.rotation)?;
    let sigma = parent.scale();
    let shrink = 8f64.ln();
    let mut child = parent.clone();
    child.log_scale = parent.log_scale.map(|v| v - shrink);
    let mut out: [Gaussian3D; 9] = std::array::from_fn(|_| child.clone());
    for (o, c) in out[1..].iter_mut().enumerate() {
        let sign = |bit: usize| if o >> bit & 1 == 1 { 0.5 } else { -0.5 };
        let local = Vec3::new(sign(0) * sigma.x, sign(1) * sigma.y, sign(2) * sigma.z);
        c.position = parent.position + r * local;
    }
    Ok(out)
}

/// Outcome of [`structured_split`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Parents that were replaced, in processing order.
    pub split: Vec<usize>,
    /// Parents skipped because the budget cap would have been exceeded.
    pub skipped: Vec<usize>,
}

/// Replaces each parent in `indices` by its nine children, in the given
/// order, while the count stays within `max_gaussians`. Survivors keep their
/// order; children are appended. Statistics are zeroed.
pub fn structured_split(
    scene: &mut GaussianScene,
    indices: &[usize],
    max_gaussians: Option<usize>,
) -> Result<(SplitReport, Remap)> {
    let n = scene.len();
    let mut chosen = vec![false; n];
    for &i in indices {
        if i >= n {
            return invalid(format!("split index {i} out of range for {n} gaussians"));
        }
        if chosen[i] {
            return invalid(format!("duplicate split index {i}"));
        }
        chosen[i] = true;
    }
    let mut report = SplitReport::default();
    if indices.is_empty() {
        return Ok((report, (0..n).map(Some).collect()));
    }
    let mut count = n;
    let mut children = Vec::new();
    chosen.fill(false);
    for &i in indices {
        if max_gaussians.is_some_and(|cap| count + 8 > cap) {
            report.skipped.push(i);
            continue;
        }
        children.extend(split_children(&scene.gaussians()[i])?);
        chosen[i] = true;
        count += 8;
        report.split.push(i);
    }
    let mut remap: Remap = (0..n).filter(|&i| !chosen[i]).map(Some).collect();
    let mut gs: Vec<Gaussian3D> = remap
        .iter()
        .map(|o| scene.gaussians()[o.unwrap()].clone())
        .collect();
    remap.extend(std::iter::repeat(None).take(children.len()));
    gs.extend(children);
    scene.replace_gaussians(gs);
    Ok((report, remap))
}

/// Removes Gaussians with opacity below `floor`, compacting statistics.
pub fn prune(scene: &mut GaussianScene, floor: f64) -> Remap {
    let keep: Vec<usize> = (0..scene.len())
        .filter(|&i| sigmoid(scene.gaussians()[i].opacity_logit) >= floor)
        .collect();
    if keep.len() != scene.len() {
        scene.retain_indices(&keep);
    }
    keep.into_iter().map(Some).collect()
}

/// `second ∘ first`: maps indices after `second` to indices before `first`.
pub fn compose(first: &Remap, second: &Remap) -> Remap {
    second.iter().map(|o| o.and_then(|i| first[i])).collect()
}

/// A full control event: select by `mode`, split within the budget, prune,
/// and reset statistics.
pub fn control_event(
    scene: &mut GaussianScene,
    iter: usize,
    total_iters: usize,
    cfg: &ControlConfig,
    mode: ControlMode,
) -> Result<(ControlEvent, Remap)> {
    let threshold = match mode {
        ControlMode::Positional => cfg.pos_threshold,
        _ => threshold_at(iter, total_iters, cfg),
    };
    let selected = match mode {
        ControlMode::TextureGuided => select_texture_guided(scene, threshold),
        ControlMode::Positional => select_positional_baseline(scene, threshold),
        ControlMode::None => Vec::new(),
    };
    let n_selected = selected.len();
    let ranked = rank_selection(scene, selected, mode);
    let (report, split_map) = structured_split(scene, &ranked, cfg.max_gaussians)?;
    let before_prune = scene.len();
    let prune_map = prune(scene, cfg.prune_opacity);
    scene.reset_stats();
    let event = ControlEvent {
        iter,
        selected: n_selected,
        new_count: scene.len(),
        threshold,
        split: report.split.len(),
        skipped: report.skipped.len(),
        pruned: before_prune - scene.len(),
    };
    Ok((event, compose(&split_map, &prune_map)))
}

/// Conventional splatting densification used for content pretraining:
/// Gaussians with a large mean positional gradient are split in two (samples
/// from the parent, σ/1.6) when larger than `dense_scale`, otherwise cloned.
/// Low-opacity Gaussians are then pruned and statistics reset.
pub fn densify_baseline(
    scene: &mut GaussianScene,
    pos_threshold: f64,
    dense_scale: f64,
    prune_opacity: f64,
    max_gaussians: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Remap> {
    let ranked = rank_selection(
        scene,
        select_positional_baseline(scene, pos_threshold),
        ControlMode::Positional,
    );
    let n = scene.len();
    let mut count = n;
    let mut removed = vec![false; n];
    let mut added = Vec::new();
    for i in ranked {
        let g = &scene.gaussians()[i];
        let big = g.scale().max() > dense_scale;
        // Both a two-way split and a clone add one Gaussian.
        if max_gaussians.is_some_and(|cap| count + 1 > cap) {
            continue;
        }
        count += 1;
        if big {
            let r = quat_to_rotation(&g.rotation)?;
            let sigma = g.scale();
            for _ in 0..2 {
                let z = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let mut c = g.clone();
                c.position = g.position + r * sigma.component_mul(&z);
                c.log_scale = g.log_scale.map(|v| v - 1.6f64.ln());
                added.push(c);
            }
            removed[i] = true;
        } else {
            added.push(g.clone());
        }
    }
    let mut remap: Remap = (0..n).filter(|&i| !removed[i]).map(Some).collect();
    let mut gs: Vec<Gaussian3D> = remap
        .iter()
        .map(|o| scene.gaussians()[o.unwrap()].clone())
        .collect();
    remap.extend(std::iter::repeat(None).take(added.len()));
    gs.extend(added);
    scene.replace_gaussians(gs);
    let prune_map = prune(scene, prune_opacity);
    scene.reset_stats();
    Ok(compose(&remap, &prune_map))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::math::{logit, quat_from_axis_angle, quat_mul};
    use crate::synth::{random_gaussian, seeded};

    fn scene_with_stats(rng: &mut impl Rng, n: usize) -> GaussianScene {
        let mut s = GaussianScene::new((0..n).map(|_| random_gaussian(rng, false)).collect());
        for i in 0..n {
            s.color_grad_accum[i] = rng.gen_range(0.0..1e-3);
            s.pos_grad_accum[i] = rng.gen_range(0.0..1e-2);
            s.contrib_count[i] = rng.gen_range(0..50);
        }
        s
    }

    #[test]
    fn accumulate_examples() {
        let mut s = GaussianScene::new(vec![Gaussian3D::isotropic(
            Vec3::zeros(),
            1.0,
            0.5,
            Vec3::repeat(0.5),
        )]);
        let zero = GradBuffers::zeros(1);
        accumulate(&mut s, &zero).unwrap();
        assert_eq!((s.color_grad_accum[0], s.contrib_count[0]), (0.0, 0));

        let mut g = GradBuffers::zeros(1);
        g.color_dc[0] = Vec3::new(3.0, 4.0, 0.0);
        g.color_grad_norm[0] = 5.0;
        accumulate(&mut s, &g).unwrap();
        assert_eq!((s.color_grad_accum[0], s.contrib_count[0]), (5.0, 1));
        accumulate(&mut s, &g).unwrap();
        assert_eq!((s.color_grad_accum[0], s.contrib_count[0]), (10.0, 2));

        assert!(matches!(
            accumulate(&mut s, &GradBuffers::zeros(2)),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn threshold_schedule() {
        let cfg = ControlConfig::default();
        assert_eq!(threshold_at(100, 3000, &cfg), 1e-5);
        assert_eq!(threshold_at(1500, 3000, &cfg), 5e-6);
        assert!((threshold_at(800, 3000, &cfg) - 7.5e-6).abs() < 1e-18);
        assert_eq!(threshold_at(0, 3000, &cfg), 1e-5);
        assert_eq!(threshold_at(3000, 3000, &cfg), 5e-6);
        let mut prev = f64::INFINITY;
        for it in 0..=3000 {
            let t = threshold_at(it, 3000, &cfg);
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn control_schedule_fires_after_warmup_until_stop() {
        let cfg = ControlConfig::default();
        let fired: Vec<usize> = (1..=3000).filter(|&i| cfg.fires_at(i, 3000)).collect();
        assert_eq!(fired.first(), Some(&200));
        assert_eq!(fired.last(), Some(&1500));
        assert_eq!(fired.len(), 14);
        assert!(!cfg.accumulates_at(100, 3000));
        assert!(cfg.accumulates_at(101, 3000));
    }

    #[test]
    fn config_validation() {
        assert!(ControlConfig::default().validate().is_ok());
        let bad = ControlConfig {
            threshold_start: 1e-6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlConfig {
            stop_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlConfig {
            interval_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn selection_examples() {
        let mut s = GaussianScene::new(vec![
            Gaussian3D::isotropic(
                Vec3::zeros(),
                1.0,
                0.5,
                Vec3::repeat(0.5)
            );
            3
        ]);
        assert!(select_texture_guided(&s, 1e-5).is_empty());
        assert!(select_positional_baseline(&s, 2e-4).is_empty());
        s.color_grad_accum[1] = 4e-5;
        s.contrib_count[1] = 2;
        assert_eq!(select_texture_guided(&s, 1e-5), vec![1]);
        s.pos_grad_accum[2] = 1e-3;
        s.contrib_count[2] = 1;
        assert_eq!(select_positional_baseline(&s, 2e-4), vec![2]);
    }

    #[test]
    fn selection_matches_direct_filter() {
        let mut rng = seeded(21);
        let s = scene_with_stats(&mut rng, 300);
        let mut tex = Vec::new();
        let mut pos = Vec::new();
        for i in 0..300 {
            let c = s.contrib_count[i].max(1) as f64;
            if s.color_grad_accum[i] / c > 2e-5 {
                tex.push(i);
            }
            if s.pos_grad_accum[i] / c > 2e-4 {
                pos.push(i);
            }
        }
        assert_eq!(select_texture_guided(&s, 2e-5), tex);
        assert_eq!(select_positional_baseline(&s, 2e-4), pos);
    }

    #[test]
    fn split_identity_parent() {
        let parent = Gaussian3D::isotropic(Vec3::zeros(), 1.0, 0.7, Vec3::new(0.2, 0.4, 0.6));
        let mut s = GaussianScene::new(vec![parent.clone()]);
        let (rep, remap) = structured_split(&mut s, &[0], None).unwrap();
        assert_eq!(rep.split, vec![0]);
        assert_eq!(remap, vec![None; 9]);
        assert_eq!(s.len(), 9);
        assert_eq!(s.gaussians()[0].position, Vec3::zeros());
        let mut corners: Vec<[i32; 3]> = s.gaussians()[1..]
            .iter()
            .map(|g| {
                assert_eq!(g.position.abs(), Vec3::repeat(0.5));
                [g.position.x, g.position.y, g.position.z].map(|v| v.signum() as i32)
            })
            .collect();
        corners.sort();
        corners.dedup();
        assert_eq!(corners.len(), 8);
        for g in s.gaussians() {
            for k in 0..3 {
                assert!((g.scale()[k] - 0.125).abs() < 1e-15);
            }
            assert_eq!(g.opacity_logit, parent.opacity_logit);
            assert_eq!(g.color_dc, parent.color_dc);
            assert_eq!(g.rotation, parent.rotation);
        }
    }

    #[test]
    fn split_empty_is_noop() {
        let mut rng = seeded(22);
        let mut s = scene_with_stats(&mut rng, 10);
        let before = s.clone();
        let (rep, remap) = structured_split(&mut s, &[], None).unwrap();
        assert_eq!(s, before);
        assert!(rep.split.is_empty());
        assert_eq!(remap, (0..10).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_indices() {
        let mut rng = seeded(23);
        let mut s = scene_with_stats(&mut rng, 4);
        assert!(matches!(
            structured_split(&mut s, &[1, 1], None),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            structured_split(&mut s, &[4], None),
            Err(Error::InvalidInput(_))
        ));
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn split_preserves_others_and_respects_budget() {
        let mut rng = seeded(24);
        let mut s = scene_with_stats(&mut rng, 10);
        let before = s.gaussians().to_vec();
        let (rep, remap) = structured_split(&mut s, &[7, 2, 5], Some(27)).unwrap();
        assert_eq!(rep.split, vec![7, 2]);
        assert_eq!(rep.skipped, vec![5]);
        assert_eq!(s.len(), 26);
        for (i, o) in remap.iter().enumerate() {
            if let Some(old) = o {
                assert_eq!(s.gaussians()[i], before[*old]);
            }
        }
        let survivors: Vec<usize> = remap.iter().flatten().copied().collect();
        assert_eq!(survivors, vec![0, 1, 3, 4, 5, 6, 8, 9]);
        assert!(s.color_grad_accum.iter().all(|&v| v == 0.0));
        assert!(s.contrib_count.iter().all(|&v| v == 0));
    }

    #[test]
    fn prune_examples() {
        let g = |a: f64| Gaussian3D {
            opacity_logit: logit(a),
            ..Gaussian3D::isotropic(Vec3::zeros(), 1.0, 0.5, Vec3::repeat(0.5))
        };
        let mut s = GaussianScene::new(vec![g(0.9); 4]);
        let before = s.clone();
        prune(&mut s, 0.005);
        assert_eq!(s, before);
        let mut s = GaussianScene::new(vec![g(0.9), g(0.001), g(0.5)]);
        s.color_grad_accum = vec![1.0, 2.0, 3.0];
        let remap = prune(&mut s, 0.005);
        assert_eq!(remap, vec![Some(0), Some(2)]);
        assert_eq!(s.color_grad_accum, vec![1.0, 3.0]);
    }

    #[test]
    fn prune_matches_direct_filter() {
        let mut rng = seeded(25);
        let mut s = scene_with_stats(&mut rng, 200);
        for g in s.gaussians_mut() {
            g.opacity_logit = rng.gen_range(-8.0..2.0);
        }
        let expected: Vec<Gaussian3D> = s
            .gaussians()
            .iter()
            .filter(|g| sigmoid(g.opacity_logit) >= 0.01)
            .cloned()
            .collect();
        let expected_stats: Vec<f64> = (0..200)
            .filter(|&i| sigmoid(s.gaussians()[i].opacity_logit) >= 0.01)
            .map(|i| s.pos_grad_accum[i])
            .collect();
        prune(&mut s, 0.01);
        assert_eq!(s.gaussians(), &expected[..]);
        assert_eq!(s.pos_grad_accum, expected_stats);
    }

    #[test]
    fn control_event_ranks_and_resets() {
        let mut rng = seeded(26);
        let mut s = scene_with_stats(&mut rng, 6);
        for g in s.gaussians_mut() {
            g.opacity_logit = 2.0;
        }
        s.contrib_count = vec![1; 6];
        s.color_grad_accum = vec![0.0, 5e-5, 0.0, 9e-5, 2e-5, 0.0];
        let cfg = ControlConfig {
            max_gaussians: Some(6 + 16),
            ..Default::default()
        };
        let (ev, remap) =
            control_event(&mut s, 200, 3000, &cfg, ControlMode::TextureGuided).unwrap();
        assert_eq!(
            (ev.selected, ev.split, ev.skipped, ev.new_count),
            (3, 2, 1, 22)
        );
        let survivors: Vec<usize> = remap.iter().flatten().copied().collect();
        assert_eq!(survivors, vec![0, 2, 4, 5]);
        assert!(s.color_grad_accum.iter().all(|&v| v == 0.0));

        let mut s2 = scene_with_stats(&mut rng, 6);
        let before = s2.gaussians().to_vec();
        let (ev, _) = control_event(&mut s2, 200, 3000, &cfg, ControlMode::None).unwrap();
        assert_eq!(ev.split, 0);
        assert!(s2.gaussians().iter().all(|g| before.contains(g)));
    }

    #[test]
    fn baseline_densify_splits_large_and_clones_small() {
        let mut rng = seeded(27);
        let big = Gaussian3D::isotropic(Vec3::zeros(), 1.0, 0.5, Vec3::repeat(0.5));
        let small = Gaussian3D::isotropic(Vec3::x(), 0.01, 0.5, Vec3::repeat(0.5));
        let quiet = Gaussian3D::isotropic(Vec3::y(), 0.01, 0.5, Vec3::repeat(0.5));
        let mut s = GaussianScene::new(vec![big, small.clone(), quiet.clone()]);
        s.pos_grad_accum = vec![1.0, 1.0, 0.0];
        s.contrib_count = vec![1, 1, 1];
        let remap = densify_baseline(&mut s, 2e-4, 0.1, 0.005, None, &mut rng).unwrap();
        assert_eq!(remap, vec![Some(1), Some(2), None, None, None]);
        assert_eq!(s.len(), 5);
        assert_eq!(s.gaussians()[0], small);
        assert_eq!(s.gaussians()[1], quiet);
        assert_eq!(s.gaussians()[2].scale(), Vec3::repeat(1.0 / 1.6));
        assert_eq!(s.gaussians()[4], small);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_split_centroid_scale_and_count(seed in any::<u64>(), n in 1usize..12, k in 0usize..12) {
            let mut rng = seeded(seed);
            let mut s = GaussianScene::new((0..n).map(|_| random_gaussian(&mut rng, false)).collect());
            let k = k.min(n);
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            idx.truncate(k);
            let before = s.gaussians().to_vec();
            let (_, remap) = structured_split(&mut s, &idx, None).unwrap();
            prop_assert_eq!(s.len(), n + 8 * k);
            for (j, &p) in idx.iter().enumerate() {
                let kids = &s.gaussians()[n - k + 9 * j..n - k + 9 * j + 9];
                let centroid = kids.iter().fold(Vec3::zeros(), |a, g| a + g.position) / 9.0;
                prop_assert!((centroid - before[p].position).abs().max() < 1e-12);
                for c in kids {
                    prop_assert_eq!(c.log_scale, before[p].log_scale.map(|v| v - 8f64.ln()));
                    for a in 0..3 {
                        let ratio = before[p].scale()[a] / c.scale()[a];
                        prop_assert!((ratio - 8.0).abs() < 1e-12);
                    }
                    prop_assert_eq!(c.opacity_logit, before[p].opacity_logit);
                    prop_assert_eq!(c.color_dc, before[p].color_dc);
                }
            }
            for (i, o) in remap.iter().enumerate() {
                if let Some(old) = o {
                    prop_assert_eq!(&s.gaussians()[i], &before[*old]);
                }
            }
        }

        #[test]
        fn prop_split_rotation_equivariant(seed in any::<u64>(), angle in -3.1f64..3.1) {
            let mut rng = seeded(seed);
            let parent = random_gaussian(&mut rng, false);
            let axis = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) + Vec3::new(0.0, 0.0, 1e-3);
            let dq = quat_from_axis_angle(&axis, angle);
            let rot = quat_to_rotation(&dq).unwrap();
            let mut turned = parent.clone();
            turned.rotation = quat_mul(&dq, &parent.rotation);
            let a = split_children(&parent).unwrap();
            let b = split_children(&turned).unwrap();
            for (ca, cb) in a.iter().zip(&b) {
                let expected = rot * (ca.position - parent.position);
                prop_assert!((cb.position - parent.position - expected).abs().max() < 1e-12);
            }
        }
    }
}
