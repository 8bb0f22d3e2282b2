//! Optimization loops: content pretraining and stylization.

mod pretrain;
mod stylize;

pub use pretrain::{
    frusta_bounds, initial_scene, pretrain, pretrain_from, PretrainMetrics, PretrainOutcome,
};
pub use stylize::{stylize, PreparedStyle, StepMetrics, StyleTask, StylizeOutcome};

use serde::{Deserialize, Serialize};

use crate::control::{ControlConfig, ControlMode};
use crate::error::{invalid, Result};
use crate::optim::LearningRates;
use crate::stylize::losses::LossWeights;

/// How the second (non-reference) view of each stylization step is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSampling {
    #[default]
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub iters: usize,
    pub init_gaussians: usize,
    pub max_gaussians: usize,
    /// Initial isotropic σ as a fraction of the frusta-intersection extent.
    pub init_sigma_fraction: f64,
    pub init_opacity: f64,
    pub lr: LearningRates,
    pub densify_from: usize,
    pub densify_interval: usize,
    /// Densification stops after this fraction of `iters`.
    pub densify_until_fraction: f64,
    pub pos_threshold: f64,
    /// Gaussians larger than this fraction of the extent are split rather
    /// than cloned.
    pub dense_scale_fraction: f64,
    pub prune_opacity: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            init_gaussians: 100,
            max_gaussians: 500,
            init_sigma_fraction: 1.0 / 20.0,
            init_opacity: 0.1,
            lr: LearningRates::default(),
            densify_from: 100,
            densify_interval: 100,
            densify_until_fraction: 0.5,
            pos_threshold: 2e-4,
            dense_scale_fraction: 0.01,
            prune_opacity: 0.005,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        if self.densify_interval == 0 {
            return invalid("densify_interval must be at least 1");
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return invalid("init_opacity must lie in (0, 1)");
        }
        if !(self.init_sigma_fraction > 0.0) || !(0.0..=1.0).contains(&self.densify_until_fraction)
        {
            return invalid(
                "init_sigma_fraction must be positive and densify_until_fraction in [0, 1]",
            );
        }
        Ok(())
    }

    pub(crate) fn densifies_at(&self, iter: usize) -> bool {
        let until = (self.densify_until_fraction * self.iters as f64).floor() as usize;
        iter >= self.densify_from && iter <= until && iter % self.densify_interval == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StylizeConfig {
    pub iters: usize,
    pub lr: LearningRates,
    pub weights: LossWeights,
    pub control: ControlConfig,
    pub control_mode: ControlMode,
    pub view_sampling: ViewSampling,
    /// `builtin` or `file:<dir>`; drives guidance matching.
    pub extractor: String,
    /// Relative depth tolerance of the pseudo-view visibility test; the
    /// absolute tolerance is `1e-3 · extent`.
    pub visibility_rel: f64,
}

impl Default for StylizeConfig {
    fn default() -> Self {
        Self {
            iters: 3000,
            lr: LearningRates::default(),
            weights: LossWeights::default(),
            control: ControlConfig::default(),
            control_mode: ControlMode::TextureGuided,
            view_sampling: ViewSampling::Uniform,
            extractor: "builtin".into(),
            visibility_rel: 0.01,
        }
    }
}

impl StylizeConfig {
    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        self.weights.validate()?;
        self.control.validate()?;
        if !(self.visibility_rel >= 0.0) {
            return invalid("visibility_rel must be non-negative");
        }
        self.extractor
            .parse::<crate::stylize::features::Extractor>()?;
        Ok(())
    }
}

/// Full training configuration, as read from TOML or JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub pretrain: PretrainConfig,
    pub stylize: StylizeConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.stylize.validate()
    }
}
