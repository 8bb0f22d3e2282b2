//! Procedural scenes, cameras and datasets used by tests, benchmarks and the
//! CLI demo commands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::gaussian::{rgb_to_dc, Gaussian3D, GaussianScene};
use crate::image::Image;
use crate::math::{logit, normalize_quat, rotation_to_quat, Mat3, Vec3};

/// A Gaussian with random pose, shape, opacity and color.
pub fn random_gaussian(rng: &mut impl Rng, with_rest: bool) -> Gaussian3D {
    let q = normalize_quat(&[
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.2..1.0),
    ])
    .expect("non-zero quaternion");
    Gaussian3D {
        position: Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
        rotation: q,
        log_scale: Vec3::from_fn(|_, _| rng.gen_range(-2.0..1.0)),
        opacity_logit: rng.gen_range(-3.0..3.0),
        color_dc: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        color_rest: with_rest
            .then(|| [0, 1, 2].map(|_| Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5)))),
    }
}

/// Camera at the origin looking down +z with image y along world +y.
pub fn front_camera(width: u32, height: u32, focal: f64) -> Camera {
    Camera::look_at(width, height, focal, Vec3::zeros(), Vec3::z(), -Vec3::y())
}

/// `n` Gaussians placed inside the view of `cam` at depths in [2, 4], with
/// footprints of roughly 1–4 pixels, moderate opacities and colors in
/// (0.1, 0.9).
pub fn random_visible_scene(rng: &mut impl Rng, n: usize, cam: &Camera) -> GaussianScene {
    let gaussians = (0..n)
        .map(|_| {
            let u = rng.gen_range(-0.5..cam.width as f64 - 0.5);
            let v = rng.gen_range(-0.5..cam.height as f64 - 0.5);
            let z = rng.gen_range(2.0..4.0);
            let mut g = random_gaussian(rng, false);
            g.position = cam.unproject(u, v, z);
            let px = rng.gen_range(1.0..4.0);
            let sigma = px * z / cam.fx;
            g.log_scale = Vec3::from_fn(|_, _| sigma.ln() + rng.gen_range(-0.4..0.4));
            g.opacity_logit = logit(rng.gen_range(0.2..0.9));
            g.color_dc = rgb_to_dc(&Vec3::from_fn(|_, _| rng.gen_range(0.1..0.9)));
            g
        })
        .collect();
    GaussianScene::new(gaussians)
}

/// Uniform random image with values in `[lo, hi)`.
pub fn random_image(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    channels: usize,
    lo: f64,
    hi: f64,
) -> Image {
    let data = (0..width * height * channels)
        .map(|_| rng.gen_range(lo..hi))
        .collect();
    Image {
        width,
        height,
        channels,
        data,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A flat parallelogram `center + s·half_u + t·half_v`, |s|, |t| ≤ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarQuad {
    pub center: Vec3,
    pub half_u: Vec3,
    pub half_v: Vec3,
}

impl PlanarQuad {
    /// The 2×2 quad in the z = 0 plane, centered at the origin.
    pub fn unit() -> Self {
        Self {
            center: Vec3::zeros(),
            half_u: Vec3::x(),
            half_v: Vec3::y(),
        }
    }

    pub fn normal(&self) -> Vec3 {
        self.half_u.cross(&self.half_v).normalize()
    }

    /// Ray hit through pixel coordinates `(u, v)`: camera-space depth and
    /// quad coordinates `(s, t)`.
    pub fn intersect(&self, cam: &Camera, u: f64, v: f64) -> Option<(f64, f64, f64)> {
        let origin = cam.center();
        let dir = cam.rotation().transpose()
            * Vec3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
        let n = self.normal();
        let denom = n.dot(&dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let z = n.dot(&(self.center - origin)) / denom;
        if z <= 0.0 {
            return None;
        }
        let rel = origin + dir * z - self.center;
        let s = rel.dot(&self.half_u) / self.half_u.norm_squared();
        let t = rel.dot(&self.half_v) / self.half_v.norm_squared();
        (s.abs() <= 1.0 && t.abs() <= 1.0).then_some((z, s, t))
    }
}

/// Two-color checkerboard with `cells`×`cells` squares over quad coordinates.
pub fn checker(s: f64, t: f64, cells: usize, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let cell =
        |x: f64| (((x + 1.0) * 0.5 * cells as f64).floor() as i64).clamp(0, cells as i64 - 1);
    if (cell(s) + cell(t)) % 2 == 0 {
        a
    } else {
        b
    }
}

/// Analytic ray-traced render of a textured quad over black, with
/// `supersample`² samples per pixel. Depth is the camera-space depth at the
/// pixel center (0 on a miss).
pub fn render_quad(
    quad: &PlanarQuad,
    cam: &Camera,
    supersample: usize,
    texture: impl Fn(f64, f64) -> [f64; 3],
) -> (Image, Image) {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut color = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let ss = supersample.max(1);
    let weight = 1.0 / (ss * ss) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let u = x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                    let v = y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                    if let Some((_, s, t)) = quad.intersect(cam, u, v) {
                        let c = texture(s, t);
                        for k in 0..3 {
                            acc[k] += c[k] * weight;
                        }
                    }
                }
            }
            for k in 0..3 {
                color.set(x, y, k, acc[k]);
            }
            if let Some((z, _, _)) = quad.intersect(cam, x as f64, y as f64) {
                depth.data[y * w + x] = z;
            }
        }
    }
    (color, depth)
}

/// `n` cameras on a cone around the -z axis, all looking at the origin.
/// `tilt` is the angle from the axis; `phase` rotates the ring.
pub fn camera_ring(
    n: usize,
    size: u32,
    focal: f64,
    radius: f64,
    tilt: f64,
    phase: f64,
) -> Vec<Camera> {
    (0..n)
        .map(|k| {
            let theta = phase + std::f64::consts::TAU * k as f64 / n as f64;
            let eye = radius
                * Vec3::new(
                    tilt.sin() * theta.cos(),
                    tilt.sin() * theta.sin(),
                    -tilt.cos(),
                );
            Camera::look_at(size, size, focal, eye, Vec3::zeros(), -Vec3::y())
                .with_id(format!("view_{k:03}"))
        })
        .collect()
}

/// Posed images with a disjoint set of held-out views.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub held_out_cameras: Vec<Camera>,
    pub held_out_images: Vec<Image>,
}

pub const CHECKER_A: [f64; 3] = [0.85, 0.35, 0.25];
pub const CHECKER_B: [f64; 3] = [0.2, 0.45, 0.8];

/// The pretraining benchmark: a 4×4 checkerboard on the unit quad seen by
/// eight ring cameras, plus two held-out ring cameras between them.
pub fn checkerboard_quad_dataset(size: u32) -> SynthDataset {
    let quad = PlanarQuad::unit();
    let focal = 0.9 * size as f64;
    let tex = |s: f64, t: f64| checker(s, t, 4, CHECKER_A, CHECKER_B);
    let render = |cams: &[Camera]| {
        cams.iter()
            .map(|c| render_quad(&quad, c, 4, tex).0)
            .collect::<Vec<_>>()
    };
    let cameras = camera_ring(8, size, focal, 3.5, 0.35, 0.0);
    let mut held_out_cameras = camera_ring(8, size, focal, 3.5, 0.35, std::f64::consts::PI / 8.0);
    held_out_cameras.truncate(2);
    for (k, c) in held_out_cameras.iter_mut().enumerate() {
        c.id = format!("held_{k:03}");
    }
    SynthDataset {
        images: render(&cameras),
        held_out_images: render(&held_out_cameras),
        cameras,
        held_out_cameras,
    }
}

/// A coarse content model of `quad`: `k`×`k` flat Gaussians on a regular
/// grid with equal opacity, colored by `rgb(s, t)` at their quad coordinates.
pub fn quad_grid_scene(
    quad: &PlanarQuad,
    k: usize,
    rgb: impl Fn(f64, f64) -> Vec3,
    opacity: f64,
) -> GaussianScene {
    let (u, v, n) = (
        quad.half_u.normalize(),
        quad.half_v.normalize(),
        quad.normal(),
    );
    let rot = Mat3::from_columns(&[u, v, n]);
    let q = rotation_to_quat(&rot);
    let (su, sv) = (
        2.0 * quad.half_u.norm() / k as f64,
        2.0 * quad.half_v.norm() / k as f64,
    );
    let mut gs = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            let s = (i as f64 + 0.5) / k as f64 * 2.0 - 1.0;
            let t = (j as f64 + 0.5) / k as f64 * 2.0 - 1.0;
            gs.push(Gaussian3D {
                position: quad.center + quad.half_u * s + quad.half_v * t,
                rotation: q,
                log_scale: Vec3::new((0.6 * su).ln(), (0.6 * sv).ln(), (0.02 * su.min(sv)).ln()),
                opacity_logit: logit(opacity),
                color_dc: rgb_to_dc(&rgb(s, t)),
                color_rest: None,
            });
        }
    }
    GaussianScene::new(gs)
}

/// Recolors a rendered view: each covered pixel takes `palette` of the
/// surface point under it, scaled by the pixel coverage. Produces a style
/// reference aligned with the content geometry.
pub fn recolor(
    cam: &Camera,
    depth: &Image,
    transmittance: &Image,
    palette: impl Fn(&Vec3) -> [f64; 3],
) -> Image {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut out = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let cover = 1.0 - transmittance.data[i];
            if cover < 1e-6 {
                continue;
            }
            let c = palette(&cam.unproject(x as f64, y as f64, depth.data[i] / cover));
            for k in 0..3 {
                out.data[3 * i + k] = cover * c[k];
            }
        }
    }
    out
}

/// World-space 3D checkerboard of edge `cell`. Cell faces sit half a cell
/// off the axes so axis-aligned planes through the origin do not straddle
/// a face.
pub fn world_checker(p: &Vec3, cell: f64, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let parity = (0..3)
        .map(|k| (p[k] / cell + 0.5).floor() as i64)
        .sum::<i64>()
        .rem_euclid(2);
    if parity == 0 {
        a
    } else {
        b
    }
}

/// [`recolor`] with a [`world_checker`] palette.
pub fn checker_recolor(
    cam: &Camera,
    depth: &Image,
    transmittance: &Image,
    cell: f64,
    a: [f64; 3],
    b: [f64; 3],
) -> Image {
    recolor(cam, depth, transmittance, |p| world_checker(p, cell, a, b))
}
