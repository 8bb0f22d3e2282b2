use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::{GaussianScene, ShDegree};
use crate::image::Image;

use super::forward::{check_inputs, sorted_splats};
use super::{ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};

/// Output of the untiled reference renderer.
#[derive(Clone, Debug)]
pub struct ReferenceRender {
    pub color: Image,
    pub depth: Image,
    pub final_transmittance: Image,
}

/// Brute-force renderer: every pixel walks every splat in front of the near
/// plane, with no footprint culling and no tiling. Kept as an oracle for
/// [`super::render`].
pub fn render_reference(
    scene: &GaussianScene,
    cam: &Camera,
    degree: ShDegree,
) -> Result<ReferenceRender> {
    check_inputs(scene, cam, degree)?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let splats = sorted_splats(scene, cam, degree, false);
    let mut color = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut trans = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let mut t = 1.0f64;
            let mut c = [0.0f64; 3];
            let mut d = 0.0f64;
            for s in &splats {
                let dx = px - s.mean2d.x;
                let dy = py - s.mean2d.y;
                let q = dx * (s.conic[(0, 0)] * dx + s.conic[(0, 1)] * dy)
                    + dy * (s.conic[(1, 0)] * dx + s.conic[(1, 1)] * dy);
                let a = (s.base_opacity * (-0.5 * q).exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                if t * (1.0 - a) < TRANSMITTANCE_MIN {
                    break;
                }
                for ch in 0..3 {
                    c[ch] += s.rgb[ch] * a * t;
                }
                d += s.depth * a * t;
                t *= 1.0 - a;
            }
            color.data[3 * (y * w + x)..3 * (y * w + x) + 3].copy_from_slice(&c);
            depth.data[y * w + x] = d;
            trans.data[y * w + x] = t;
        }
    }
    Ok(ReferenceRender {
        color,
        depth,
        final_transmittance: trans,
    })
}
