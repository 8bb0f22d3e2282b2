//! Desk-scale experiment protocols: the three-arm control benchmark, depth
//! drift, cross-view consistency and the two-pass robustness protocol.

use serde::{Deserialize, Serialize};

use super::{l1, psnr};
use crate::camera::{camera_path, Camera};
use crate::control::ControlMode;
use crate::error::{invalid, Result};
use crate::gaussian::{GaussianScene, ShDegree};
use crate::image::Image;
use crate::math::Vec3;
use crate::raster::render;
use crate::stylize::losses::loss_view;
use crate::stylize::pseudo_view::{
    surface_depth, synthesize_pseudo_view, Visibility, MIN_LIFT_COVER,
};
use crate::synth::{camera_ring, quad_grid_scene, recolor, world_checker, PlanarQuad};
use crate::train::{PreparedStyle, StyleTask, StylizeConfig, StylizeOutcome};

/// A content model with a style reference and training cameras.
#[derive(Clone, Debug)]
pub struct StyleScenario {
    pub name: String,
    pub content: GaussianScene,
    pub style_ref: Image,
    pub ref_pose: Camera,
    pub cameras: Vec<Camera>,
}

impl StyleScenario {
    pub fn task(&self) -> StyleTask<'_> {
        StyleTask {
            content: &self.content,
            style_ref: &self.style_ref,
            ref_pose: &self.ref_pose,
            cameras: &self.cameras,
        }
    }

    /// Extent-scaled visibility tolerances of this scenario.
    pub fn visibility(&self) -> Visibility {
        Visibility::for_extent(self.content.extent())
    }
}

pub const STYLE_A: [f64; 3] = [0.9, 0.75, 0.2];
pub const STYLE_B: [f64; 3] = [0.15, 0.2, 0.55];

/// Style palette of the toy benchmark: a checkerboard of edge `cell` inside
/// the square |x|, |y| ≤ `patch` and the flat color `a` outside it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckerPatch {
    pub cell: f64,
    pub patch: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl CheckerPatch {
    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        if p.x.abs() <= self.patch && p.y.abs() <= self.patch {
            world_checker(p, self.cell, self.a, self.b)
        } else {
            self.a
        }
    }
}

impl Default for CheckerPatch {
    fn default() -> Self {
        Self {
            cell: 0.25,
            patch: 0.5,
            a: STYLE_A,
            b: STYLE_B,
        }
    }
}

/// Content color of the toy benchmark quad: a smooth two-axis ramp, so that
/// every content location has a distinct feature.
pub fn content_ramp(s: f64, t: f64) -> Vec3 {
    Vec3::new(0.45 + 0.2 * s, 0.45 + 0.2 * t, 0.5 - 0.1 * (s + t))
}

/// The toy stylization benchmark: a color-ramp quad held by a `grid`×`grid`
/// lattice of flat Gaussians, recolored at a frontal reference pose with
/// `style`.
pub fn checker_scenario(size: u32, grid: usize, style: CheckerPatch) -> StyleScenario {
    let focal = 0.9 * size as f64;
    let content = quad_grid_scene(&PlanarQuad::unit(), grid, content_ramp, 0.95);
    let ref_pose = camera_ring(1, size, focal, 3.5, 0.0, 0.0)
        .remove(0)
        .with_id("reference");
    let out = render(&content, &ref_pose, ShDegree::Diffuse).expect("valid benchmark camera");
    let style_ref = recolor(&ref_pose, &out.depth, &out.final_transmittance, |p| {
        style.color(p)
    });
    StyleScenario {
        name: "checker".into(),
        content,
        style_ref,
        ref_pose,
        cameras: camera_ring(8, size, focal, 3.5, 0.35, 0.0),
    }
}

/// The toy benchmark used by the experiments: a 7×7 content lattice under a
/// full-quad checker style of edge 0.35.
pub fn toy_benchmark(size: u32) -> StyleScenario {
    checker_scenario(
        size,
        7,
        CheckerPatch {
            cell: 0.35,
            patch: 9.0,
            ..Default::default()
        },
    )
}

/// A pose halfway between the first two training cameras.
pub fn held_out_pose(scenario: &StyleScenario) -> Camera {
    let cams = &scenario.cameras;
    let next = &cams[1 % cams.len()];
    cams[0].interpolate(next, 0.5).with_id("held_out")
}

/// The same scenario with the content render at the reference pose as the
/// style reference, so that the content model is already optimal.
pub fn identity_scenario(scenario: &StyleScenario) -> Result<StyleScenario> {
    let style_ref = render(&scenario.content, &scenario.ref_pose, ShDegree::Diffuse)?.color;
    Ok(StyleScenario {
        name: format!("{}_identity", scenario.name),
        style_ref,
        ..scenario.clone()
    })
}

/// Evaluation path of a scenario: `frames` poses sweeping a quarter of the
/// training ring.
pub fn scenario_path(scenario: &StyleScenario, frames: usize) -> Vec<Camera> {
    let cams = &scenario.cameras;
    camera_path(&cams[0], &cams[cams.len() / 4], frames)
}

/// Per-method outcome of a benchmark arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub l1: f64,
    pub psnr: f64,
    pub gaussians: usize,
    pub selected: usize,
    pub depth_drift: f64,
    pub consistency: f64,
    pub wall_clock_s: f64,
    pub splats_per_sec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub budget: usize,
    pub max_gaussians: usize,
    pub extent: f64,
    pub methods: Vec<MethodResult>,
    /// Reference-based perceptual metric; needs a pretrained network.
    pub ref_lpips: String,
}

impl BenchmarkReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub fn method_name(mode: ControlMode) -> &'static str {
    match mode {
        ControlMode::TextureGuided => "texture_guided",
        ControlMode::Positional => "positional",
        ControlMode::None => "none",
    }
}

/// Mean absolute depth change against the content model over the training
/// views of `prepared`.
pub fn depth_drift(scene: &GaussianScene, prepared: &PreparedStyle) -> Result<f64> {
    let cams = prepared.cameras();
    let mut total = 0.0;
    for (i, cam) in cams.iter().enumerate() {
        let out = render(scene, cam, ShDegree::Diffuse)?;
        total += l1(&out.depth, prepared.content_depth(i));
    }
    Ok(total / cams.len() as f64)
}

/// Mean masked L1 between render B and render A warped to pose B by A's
/// rendered surface depth, over camera pairs. Pairs with an empty mask are skipped.
pub fn consistency_score(
    scene: &GaussianScene,
    pairs: &[(Camera, Camera)],
    vis: Visibility,
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0;
    for (a, b) in pairs {
        let ra = render(scene, a, ShDegree::Diffuse)?;
        let rb = render(scene, b, ShDegree::Diffuse)?;
        let da = surface_depth(&ra.depth, &ra.final_transmittance, MIN_LIFT_COVER);
        let db = surface_depth(&rb.depth, &rb.final_transmittance, MIN_LIFT_COVER);
        let pv = synthesize_pseudo_view(&ra.color, &da, a, b, &db, vis)?;
        if pv.coverage() == 0 {
            continue;
        }
        total += loss_view(&rb.color, &pv)?;
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

/// Neighbouring pairs around a camera ring.
pub fn ring_pairs(cameras: &[Camera]) -> Vec<(Camera, Camera)> {
    let n = cameras.len();
    if n < 2 {
        return Vec::new();
    }
    (0..n)
        .map(|i| (cameras[i].clone(), cameras[(i + 1) % n].clone()))
        .collect()
}

/// Scores of a finished stylization run.
pub fn evaluate_run(
    method: &str,
    run: &StylizeOutcome,
    scenario: &StyleScenario,
    prepared: &PreparedStyle,
    wall_clock_s: f64,
) -> Result<MethodResult> {
    let out = render(&run.scene, &scenario.ref_pose, ShDegree::Diffuse)?;
    let rendered: usize = run.metrics.iter().map(|m| 2 * m.n_gaussians).sum();
    Ok(MethodResult {
        method: method.into(),
        l1: l1(&out.color, &scenario.style_ref),
        psnr: psnr(&out.color, &scenario.style_ref),
        gaussians: run.scene.len(),
        selected: run.events.iter().map(|e| e.selected).sum(),
        depth_drift: depth_drift(&run.scene, prepared)?,
        consistency: consistency_score(
            &run.scene,
            &ring_pairs(&scenario.cameras),
            scenario.visibility(),
        )?,
        wall_clock_s,
        splats_per_sec: if wall_clock_s > 0.0 {
            rendered as f64 / wall_clock_s
        } else {
            0.0
        },
    })
}

/// Stylizes the scenario three times under one Gaussian budget, changing
/// only the densification signal: texture-guided, positional, none.
pub fn control_benchmark(
    scenario: &StyleScenario,
    budget: usize,
    cfg: &StylizeConfig,
    seed: u64,
) -> Result<BenchmarkReport> {
    if budget > 0 && budget < 8 {
        return invalid(format!(
            "budget {budget} is smaller than one structured split (8)"
        ));
    }
    let max_gaussians = scenario.content.len() + budget;
    let prepared = PreparedStyle::new(scenario.task(), cfg)?;
    let mut methods = Vec::new();
    for mode in [
        ControlMode::TextureGuided,
        ControlMode::Positional,
        ControlMode::None,
    ] {
        let mut arm = cfg.clone();
        arm.control_mode = mode;
        arm.control.max_gaussians = Some(max_gaussians);
        let t = std::time::Instant::now();
        let run = prepared.run(&arm, seed)?;
        let secs = t.elapsed().as_secs_f64();
        methods.push(evaluate_run(
            method_name(mode),
            &run,
            scenario,
            &prepared,
            secs,
        )?);
    }
    Ok(BenchmarkReport {
        scenario: scenario.name.clone(),
        budget,
        max_gaussians,
        extent: prepared.extent(),
        methods,
        ref_lpips: "not computed".into(),
    })
}

/// Mean PSNR between two models' renders along a camera path.
pub fn path_psnr(a: &GaussianScene, b: &GaussianScene, path: &[Camera]) -> Result<f64> {
    if path.is_empty() {
        return invalid("empty camera path");
    }
    let mut total = 0.0;
    for cam in path {
        let ra = render(a, cam, ShDegree::Diffuse)?;
        let rb = render(b, cam, ShDegree::Diffuse)?;
        total += psnr(&ra.color, &rb.color);
    }
    Ok(total / path.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub held_camera: String,
    pub frames: usize,
    pub psnr: f64,
    pub seeds: (u64, u64),
}

/// Two-pass robustness protocol: stylize, re-render the result at
/// `held_camera` as a new reference, stylize a fresh copy of the content
/// from that reference, and compare both models along `path`.
pub fn robustness_protocol(
    scenario: &StyleScenario,
    held_camera: &Camera,
    path: &[Camera],
    cfg: &StylizeConfig,
    seeds: (u64, u64),
) -> Result<RobustnessReport> {
    let base = PreparedStyle::new(scenario.task(), cfg)?.run(cfg, seeds.0)?;
    let new_ref = render(&base.scene, held_camera, ShDegree::Diffuse)?.color;
    let second_task = StyleTask {
        style_ref: &new_ref,
        ref_pose: held_camera,
        ..scenario.task()
    };
    let second = PreparedStyle::new(second_task, cfg)?.run(cfg, seeds.1)?;
    Ok(RobustnessReport {
        held_camera: held_camera.id.clone(),
        frames: path.len(),
        psnr: path_psnr(&base.scene, &second.scene, path)?,
        seeds,
    })
}
