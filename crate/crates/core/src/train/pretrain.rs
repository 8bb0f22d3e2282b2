use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PretrainConfig;
use crate::camera::Camera;
use crate::control::{accumulate, densify_baseline};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{rgb_to_dc, Gaussian3D, GaussianScene, ShDegree};
use crate::image::Image;
use crate::math::Vec3;
use crate::optim::Adam;
use crate::raster::{backward, render, NEAR_PLANE};
use crate::stylize::losses::loss_rec_grad;
use crate::synth::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainMetrics {
    pub iter: usize,
    pub view: usize,
    pub loss: f64,
    pub n_gaussians: usize,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub scene: GaussianScene,
    pub metrics: Vec<PretrainMetrics>,
}

fn in_frustum(cam: &Camera, p: &Vec3) -> bool {
    let q = cam.to_camera(p);
    if q.z <= NEAR_PLANE {
        return false;
    }
    let (u, v) = cam.project_cam(&q);
    u >= -0.5 && v >= -0.5 && u < cam.width as f64 - 0.5 && v < cam.height as f64 - 0.5
}

/// Axis-aligned bounds of the region seen by every camera, estimated by
/// rejection sampling a cube around the point closest to all optical axes.
pub fn frusta_bounds(cameras: &[Camera], rng: &mut impl Rng) -> Result<(Vec3, Vec3)> {
    if cameras.is_empty() {
        return invalid("no cameras");
    }
    // Least-squares point nearest to every optical axis.
    let mut a = crate::math::Mat3::zeros();
    let mut b = Vec3::zeros();
    for c in cameras {
        let o = c.center();
        let d = c.rotation().row(2).transpose();
        let p = crate::math::Mat3::identity() - d * d.transpose();
        a += p;
        b += p * o;
    }
    let focus = match a.try_inverse() {
        Some(inv) if cameras.len() > 1 => inv * b,
        _ => {
            let c = &cameras[0];
            c.center() + c.rotation().row(2).transpose()
        }
    };
    let radius = cameras
        .iter()
        .map(|c| (c.center() - focus).norm())
        .fold(0.0, f64::max)
        .max(1e-6);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut hits = 0;
    for _ in 0..20_000 {
        let p = focus + Vec3::from_fn(|_, _| rng.gen_range(-radius..radius));
        if cameras.iter().all(|c| in_frustum(c, &p)) {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
            hits += 1;
        }
    }
    if hits < 2 {
        return Err(Error::InvalidInput("camera frusta do not overlap".into()));
    }
    Ok((lo, hi))
}

/// Random isotropic gray Gaussians inside the frusta intersection.
pub fn initial_scene(
    cameras: &[Camera],
    cfg: &PretrainConfig,
    rng: &mut impl Rng,
) -> Result<GaussianScene> {
    let (lo, hi) = frusta_bounds(cameras, rng)?;
    let extent = (hi - lo).norm();
    let sigma = cfg.init_sigma_fraction * extent;
    let gs = (0..cfg.init_gaussians)
        .map(|_| {
            let p = Vec3::from_fn(|k, _| {
                if hi[k] > lo[k] {
                    rng.gen_range(lo[k]..hi[k])
                } else {
                    lo[k]
                }
            });
            let mut g = Gaussian3D::isotropic(p, sigma, cfg.init_opacity, Vec3::repeat(0.5));
            g.color_dc = rgb_to_dc(&Vec3::repeat(0.5));
            g
        })
        .collect();
    Ok(GaussianScene::new(gs))
}

fn check_views(images: &[Image], cameras: &[Camera]) -> Result<()> {
    if images.len() != cameras.len() {
        return invalid(format!(
            "{} images but {} cameras",
            images.len(),
            cameras.len()
        ));
    }
    for (img, cam) in images.iter().zip(cameras) {
        cam.validate()?;
        if img.width != cam.width as usize || img.height != cam.height as usize || img.channels != 3
        {
            return invalid(format!(
                "image for camera '{}' is {}x{}x{}, camera expects {}x{}x3",
                cam.id, img.width, img.height, img.channels, cam.width, cam.height
            ));
        }
    }
    Ok(())
}

/// Fits a Gaussian scene to posed images from a random initialization.
pub fn pretrain(
    images: &[Image],
    cameras: &[Camera],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    if images.len() < 2 {
        return invalid("pretraining needs at least two posed images");
    }
    check_views(images, cameras)?;
    cfg.validate()?;
    let mut rng = seeded(seed);
    let scene = initial_scene(cameras, cfg, &mut rng)?;
    run(scene, images, cameras, cfg, &mut rng)
}

/// Fits an existing scene to posed images.
pub fn pretrain_from(
    scene: GaussianScene,
    images: &[Image],
    cameras: &[Camera],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    if images.is_empty() {
        return invalid("pretraining needs at least one posed image");
    }
    check_views(images, cameras)?;
    cfg.validate()?;
    run(scene, images, cameras, cfg, &mut seeded(seed))
}

/// Spatial scale for the position learning rate and the densification size
/// test: the center spread, or for degenerate scenes the mean camera distance.
fn working_extent(scene: &GaussianScene, cameras: &[Camera]) -> f64 {
    let e = scene.extent();
    if e > 1e-9 {
        return e;
    }
    let centroid =
        scene.gaussians().iter().map(|g| g.position).sum::<Vec3>() / scene.len().max(1) as f64;
    cameras
        .iter()
        .map(|c| (c.center() - centroid).norm())
        .sum::<f64>()
        / cameras.len() as f64
}

fn run(
    mut scene: GaussianScene,
    images: &[Image],
    cameras: &[Camera],
    cfg: &PretrainConfig,
    rng: &mut impl Rng,
) -> Result<PretrainOutcome> {
    scene = scene.to_diffuse();
    scene.reset_stats();
    let extent = working_extent(&scene, cameras);
    let lr = cfg.lr.scaled_to_extent(extent);
    let mut adam = Adam::new(scene.len());
    let mut metrics = Vec::with_capacity(cfg.iters);
    for iter in 1..=cfg.iters {
        let view = rng.gen_range(0..cameras.len());
        let cam = &cameras[view];
        let out = render(&scene, cam, ShDegree::Diffuse)?;
        let (loss, grad) = loss_rec_grad(&out.color, &images[view])?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iter,
                detail: format!(
                    "pretraining loss on view '{}' with {} gaussians",
                    cam.id,
                    scene.len()
                ),
            });
        }
        let grads = backward(&scene, cam, &out, &grad, None)?;
        accumulate(&mut scene, &grads)?;
        adam.update(&mut scene, &grads, &lr)?;
        if cfg.densifies_at(iter) {
            let remap = densify_baseline(
                &mut scene,
                cfg.pos_threshold,
                cfg.dense_scale_fraction * extent,
                cfg.prune_opacity,
                Some(cfg.max_gaussians),
                rng,
            )?;
            adam.remap(&remap);
        }
        metrics.push(PretrainMetrics {
            iter,
            view,
            loss,
            n_gaussians: scene.len(),
        });
    }
    Ok(PretrainOutcome { scene, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;
    use crate::synth::{camera_ring, checkerboard_quad_dataset};

    #[test]
    fn zero_iterations_return_initialization() {
        let ds = checkerboard_quad_dataset(24);
        let cfg = PretrainConfig {
            iters: 0,
            ..Default::default()
        };
        let out = pretrain(&ds.images, &ds.cameras, &cfg, 3).unwrap();
        let init = initial_scene(&ds.cameras, &cfg, &mut seeded(3)).unwrap();
        assert_eq!(out.scene, init);
        assert!(out.metrics.is_empty());
        assert_eq!(init.len(), 100);
    }

    #[test]
    fn frusta_bounds_contain_the_shared_target() {
        let cams = camera_ring(6, 32, 30.0, 3.0, 0.4, 0.0);
        let (lo, hi) = frusta_bounds(&cams, &mut seeded(1)).unwrap();
        assert!(lo.iter().all(|&v| v < 0.0) && hi.iter().all(|&v| v > 0.0));
        // Every axis passes through the origin, so the sampling cube is the
        // origin ± the camera distance. The shared region is open behind the
        // target, so it reaches the cube face on +z.
        for v in lo.iter().chain(hi.iter()) {
            assert!(v.abs() <= 3.0 + 1e-9, "{lo} {hi}");
        }
        assert!(hi.z > 2.9 && hi.x < 2.9 && hi.y < 2.9, "{hi}");
        // Two cameras looking away from each other share nothing.
        let a = Camera::look_at(16, 16, 10.0, Vec3::zeros(), Vec3::z(), -Vec3::y());
        let b = Camera::look_at(16, 16, 10.0, Vec3::zeros(), -Vec3::z(), -Vec3::y());
        assert!(frusta_bounds(&[a, b], &mut seeded(1)).is_err());
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let ds = checkerboard_quad_dataset(16);
        let cfg = PretrainConfig::default();
        assert!(pretrain(&ds.images[..1], &ds.cameras[..1], &cfg, 0).is_err());
        assert!(pretrain(&ds.images[..3], &ds.cameras[..4], &cfg, 0).is_err());
        let mut imgs = ds.images.clone();
        imgs[2] = Image::new(8, 8, 3);
        assert!(pretrain(&imgs, &ds.cameras, &cfg, 0).is_err());
    }

    #[test]
    fn solid_color_fit_with_one_covering_gaussian() {
        let cams = camera_ring(2, 16, 16.0, 3.0, 0.1, 0.0);
        let target = Image::filled(16, 16, &[0.7, 0.4, 0.2]);
        let images = vec![target.clone(), target.clone()];
        let scene = GaussianScene::new(vec![Gaussian3D::isotropic(
            Vec3::zeros(),
            1.5,
            0.5,
            Vec3::repeat(0.5),
        )]);
        let cfg = PretrainConfig {
            iters: 1500,
            densify_from: usize::MAX,
            ..Default::default()
        };
        let out = pretrain_from(scene, &images, &cams, &cfg, 5).unwrap();
        assert_eq!(out.scene.len(), 1);
        for c in &cams {
            let r = render(&out.scene, c, ShDegree::Diffuse).unwrap();
            let p = psnr(&r.color, &target);
            assert!(p > 40.0, "psnr {p}");
        }
    }

    #[test]
    fn bit_reproducible() {
        let ds = checkerboard_quad_dataset(24);
        let cfg = PretrainConfig {
            iters: 250,
            init_gaussians: 40,
            ..Default::default()
        };
        let a = pretrain(&ds.images, &ds.cameras, &cfg, 11).unwrap();
        let b = pretrain(&ds.images, &ds.cameras, &cfg, 11).unwrap();
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.metrics, b.metrics);
    }
}
