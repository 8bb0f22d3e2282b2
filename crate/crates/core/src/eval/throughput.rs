//! Render timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{invalid, Result};
use crate::gaussian::{GaussianScene, ShDegree};
use crate::math::logit;
use crate::raster::render;
use crate::synth::{front_camera, random_visible_scene, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub gaussians: usize,
    pub repeats: usize,
    pub mean_s: f64,
    pub stdev_s: f64,
    pub fps: f64,
    pub splats_per_sec: f64,
}

/// Wall-clock statistics over `repeats` renders (after one warm-up render).
pub fn throughput(scene: &GaussianScene, cam: &Camera, repeats: usize) -> Result<Throughput> {
    if repeats == 0 {
        return invalid("throughput needs at least one repeat");
    }
    render(scene, cam, ShDegree::Diffuse)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(render(scene, cam, ShDegree::Diffuse)?);
        times.push(t.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / repeats as f64;
    let per_sec = if mean > 0.0 {
        1.0 / mean
    } else {
        f64::INFINITY
    };
    Ok(Throughput {
        gaussians: scene.len(),
        repeats,
        mean_s: mean,
        stdev_s: var.sqrt(),
        fps: per_sec,
        splats_per_sec: scene.len() as f64 * per_sec,
    })
}

/// Least-squares line `y = slope·x + intercept` and its R².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("linear fit needs two or more paired samples");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("linear fit needs distinct x values");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

const SWEEP_OPACITY: f64 = 0.05;

/// Render timings over a range of scene sizes and the linear fit of mean
/// render time against splat count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSweep {
    pub size: u32,
    pub runs: Vec<Throughput>,
    pub fit: LinearFit,
}

/// Times random scenes of each count in `counts`, all seen by one
/// `size`×`size` camera. Splats are faint (opacity 0.05) so that pixels do
/// not saturate: with opaque overdraw, early termination caps the per-pixel
/// work and time stops growing with the splat count.
pub fn throughput_sweep(
    counts: &[usize],
    size: u32,
    repeats: usize,
    seed: u64,
) -> Result<ThroughputSweep> {
    let cam = front_camera(size, size, size as f64);
    let mut rng = seeded(seed);
    let runs = counts
        .iter()
        .map(|&n| {
            let mut scene = random_visible_scene(&mut rng, n, &cam);
            for g in scene.gaussians_mut() {
                g.opacity_logit = logit(SWEEP_OPACITY);
            }
            throughput(&scene, &cam, repeats)
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = runs.iter().map(|r| r.gaussians as f64).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.mean_s).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(ThroughputSweep { size, runs, fit })
}
