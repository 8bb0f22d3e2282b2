use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{StylizeConfig, ViewSampling};
use crate::camera::Camera;
use crate::control::{accumulate, control_event, ControlEvent};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianScene, ShDegree};
use crate::image::Image;
use crate::optim::Adam;
use crate::raster::{backward, render};
use crate::stylize::features::{
    builtin_backward, extract_builtin, grid_size, Extractor, FeatureMap,
};
use crate::stylize::losses::{
    loss_color_grad, loss_depth_grad, loss_rec_grad, loss_tcm_grad, loss_view_grad, total_loss,
    LossParts,
};
use crate::stylize::matching::{match_nearest, GuidanceIndexMap};
use crate::stylize::pseudo_view::{
    surface_depth, synthesize_pseudo_view, PseudoView, Visibility, MIN_LIFT_COVER,
};
use crate::synth::seeded;

/// Feature-file key of the content render at the reference pose.
pub const REFERENCE_CONTENT_KEY: &str = "reference_content";

/// Inputs of one stylization run.
#[derive(Clone, Copy, Debug)]
pub struct StyleTask<'a> {
    pub content: &'a GaussianScene,
    pub style_ref: &'a Image,
    pub ref_pose: &'a Camera,
    pub cameras: &'a [Camera],
}

/// One metrics line per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_depth: f64,
    pub loss_view: f64,
    pub loss_tcm: f64,
    pub loss_color: f64,
    pub n_gaussians: usize,
}

#[derive(Clone, Debug)]
pub struct StylizeOutcome {
    pub scene: GaussianScene,
    pub metrics: Vec<StepMetrics>,
    pub events: Vec<ControlEvent>,
}

#[derive(Clone, Debug)]
struct ViewCache {
    camera: Camera,
    content_depth: Image,
    pseudo: PseudoView,
    guidance: GuidanceIndexMap,
}

/// Everything that depends only on the content model and the reference:
/// content renders and depths, pseudo views and guidance maps per camera.
/// Computed once and shared by every run on the same task.
#[derive(Clone, Debug)]
pub struct PreparedStyle {
    content: GaussianScene,
    style_ref: Image,
    ref_pose: Camera,
    style_features: FeatureMap,
    views: Vec<ViewCache>,
    extent: f64,
}

impl PreparedStyle {
    pub fn new(task: StyleTask<'_>, cfg: &StylizeConfig) -> Result<Self> {
        cfg.validate()?;
        let extractor: Extractor = cfg.extractor.parse()?;
        let StyleTask {
            content,
            style_ref,
            ref_pose,
            cameras,
        } = task;
        ref_pose.validate()?;
        if style_ref.width != ref_pose.width as usize
            || style_ref.height != ref_pose.height as usize
            || style_ref.channels != 3
        {
            return invalid("style reference resolution does not match the reference pose");
        }
        if cameras.is_empty() {
            return invalid("stylization needs at least one training camera");
        }
        let content = content.to_diffuse();
        let extent = content.extent();
        let vis = Visibility {
            rel: cfg.visibility_rel,
            abs: 1e-3 * extent,
        };
        let ref_out = render(&content, ref_pose, ShDegree::Diffuse)?;
        let ref_surface =
            surface_depth(&ref_out.depth, &ref_out.final_transmittance, MIN_LIFT_COVER);
        let ref_content_features = extractor.extract(&ref_out.color, REFERENCE_CONTENT_KEY)?;
        let style_features = extract_builtin(style_ref);
        let (srw, srh) = grid_size(style_ref.width, style_ref.height);
        let views = cameras
            .iter()
            .map(|cam| {
                cam.validate()?;
                let out = render(&content, cam, ShDegree::Diffuse)?;
                let surface = surface_depth(&out.depth, &out.final_transmittance, MIN_LIFT_COVER);
                let pseudo =
                    synthesize_pseudo_view(style_ref, &ref_surface, ref_pose, cam, &surface, vis)?;
                let key = if cam.id.is_empty() {
                    "view"
                } else {
                    cam.id.as_str()
                };
                let f = extractor.extract(&out.color, key)?;
                let (gw, gh) = grid_size(cam.width as usize, cam.height as usize);
                let guidance = match_nearest(&f, &ref_content_features)?.resample(gw, gh, srw, srh);
                Ok(ViewCache {
                    camera: cam.clone(),
                    content_depth: out.depth,
                    pseudo,
                    guidance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            content,
            style_ref: style_ref.clone(),
            ref_pose: ref_pose.clone(),
            style_features,
            views,
            extent,
        })
    }

    pub fn content(&self) -> &GaussianScene {
        &self.content
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    /// Content depth rendered at training camera `i`.
    pub fn content_depth(&self, i: usize) -> &Image {
        &self.views[i].content_depth
    }

    pub fn pseudo_view(&self, i: usize) -> &PseudoView {
        &self.views[i].pseudo
    }

    /// Runs the stylization loop from the content model.
    pub fn run(&self, cfg: &StylizeConfig, seed: u64) -> Result<StylizeOutcome> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let mut scene = self.content.clone();
        scene.reset_stats();
        let lr = cfg.lr.scaled_to_extent(self.extent);
        let w = &cfg.weights;
        let mut adam = Adam::new(scene.len());
        let mut metrics = Vec::with_capacity(cfg.iters);
        let mut events = Vec::new();
        for iter in 1..=cfg.iters {
            let view = match cfg.view_sampling {
                ViewSampling::Uniform => rng.gen_range(0..self.views.len()),
            };
            let vc = &self.views[view];

            let ref_out = render(&scene, &self.ref_pose, ShDegree::Diffuse)?;
            let (loss_rec, mut g_ref) = loss_rec_grad(&ref_out.color, &self.style_ref)?;
            scale(&mut g_ref, w.rec);

            let out = render(&scene, &vc.camera, ShDegree::Diffuse)?;
            let (loss_view, g_view) = loss_view_grad(&out.color, &vc.pseudo)?;
            let (loss_depth, g_depth) = loss_depth_grad(&out.depth, &vc.content_depth)?;
            let (loss_color, g_color) = loss_color_grad(&out.color, &self.style_ref, &vc.guidance)?;
            let feats = extract_builtin(&out.color);
            let (loss_tcm, g_feat) = loss_tcm_grad(&feats, &vc.guidance, &self.style_features)?;
            let mut g_c = Image::new(out.width, out.height, 3);
            add_scaled(&mut g_c, &g_view, w.view);
            add_scaled(&mut g_c, &g_color, w.color);
            if w.tcm != 0.0 {
                add_scaled(&mut g_c, &builtin_backward(&out.color, &g_feat)?, w.tcm);
            }
            let mut g_d = g_depth;
            scale(&mut g_d, w.depth);

            let parts = LossParts {
                rec: loss_rec,
                depth: loss_depth,
                view: loss_view,
                tcm: loss_tcm,
                color: loss_color,
            };
            let loss_total = total_loss(&parts, w);
            if !loss_total.is_finite() {
                return Err(Error::NonFinite {
                    iter,
                    detail: format!(
                        "view '{}', {} gaussians, parts {}",
                        vc.camera.id,
                        scene.len(),
                        serde_json::to_string(&parts).unwrap_or_default()
                    ),
                });
            }

            let mut grads = backward(&scene, &self.ref_pose, &ref_out, &g_ref, None)?;
            grads.merge(&backward(&scene, &vc.camera, &out, &g_c, Some(&g_d))?)?;
            if cfg.control.accumulates_at(iter, cfg.iters) {
                accumulate(&mut scene, &grads)?;
            }
            adam.update(&mut scene, &grads, &lr)?;
            if cfg.control.fires_at(iter, cfg.iters) {
                let (event, remap) =
                    control_event(&mut scene, iter, cfg.iters, &cfg.control, cfg.control_mode)?;
                adam.remap(&remap);
                events.push(event);
            }
            metrics.push(StepMetrics {
                iter,
                loss_total,
                loss_rec,
                loss_depth,
                loss_view,
                loss_tcm,
                loss_color,
                n_gaussians: scene.len(),
            });
        }
        Ok(StylizeOutcome {
            scene,
            metrics,
            events,
        })
    }
}

fn scale(img: &mut Image, k: f64) {
    img.data.iter_mut().for_each(|v| *v *= k);
}

fn add_scaled(acc: &mut Image, g: &Image, k: f64) {
    if k != 0.0 {
        acc.data
            .iter_mut()
            .zip(&g.data)
            .for_each(|(a, b)| *a += k * b);
    }
}

/// Re-optimizes the appearance of a content model to match a style
/// reference at `ref_pose`.
pub fn stylize(task: StyleTask<'_>, cfg: &StylizeConfig, seed: u64) -> Result<StylizeOutcome> {
    PreparedStyle::new(task, cfg)?.run(cfg, seed)
}
