//! Metrics, oracles and the desk-scale experiment protocols.

pub mod bench;
pub mod gradcheck;
pub mod throughput;

pub use bench::{
    checker_scenario, consistency_score, control_benchmark, depth_drift, held_out_pose,
    identity_scenario, path_psnr, ring_pairs, robustness_protocol, scenario_path, toy_benchmark,
    BenchmarkReport, CheckerPatch, MethodResult, RobustnessReport, StyleScenario,
};
pub use gradcheck::{gradcheck, gradcheck_objective, GradcheckConfig, GradcheckReport, ImageGrad};
pub use throughput::{
    linear_fit, throughput, throughput_sweep, LinearFit, Throughput, ThroughputSweep,
};

use crate::image::Image;

/// PSNR cap for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(a: &Image, b: &Image) -> f64 {
    assert!(a.same_shape(b), "image shapes differ");
    if a.data.is_empty() {
        return 0.0;
    }
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64
}

/// Peak signal-to-noise ratio for images in [0, 1], capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let m = mse(a, b);
    if m <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / m).log10()).min(PSNR_CAP)
}

/// Mean absolute difference over all pixels and channels.
pub fn l1(a: &Image, b: &Image) -> f64 {
    assert!(a.same_shape(b), "image shapes differ");
    if a.data.is_empty() {
        return 0.0;
    }
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64
}
