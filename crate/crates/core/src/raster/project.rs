use nalgebra::{Matrix2x3, Vector2};

use crate::camera::Camera;
use crate::gaussian::{build_covariance, raw_color, Gaussian3D, ShDegree};
use crate::math::{Mat2, Mat3, Vec3};

use super::{ALPHA_MIN, LOW_PASS, NEAR_PLANE};

/// A Gaussian projected into one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub gaussian_id: usize,
    /// Pixel coordinates of the projected center.
    pub mean2d: Vector2<f64>,
    /// Screen-space covariance (pixels²), including the low-pass dilation.
    pub cov2d: Mat2,
    /// Inverse of `cov2d`.
    pub conic: Mat2,
    /// Camera-space z of the center.
    pub depth: f64,
    pub base_opacity: f64,
    pub rgb: Vec3,
    /// Inclusive pixel bounds `[x0, y0, x1, y1]` of the region where the
    /// splat can reach the opacity floor. Empty when `x0 > x1` or `y0 > y1`.
    pub bbox: [i64; 4],
    pub(crate) cam_point: Vec3,
    pub(crate) rgb_active: [bool; 3],
}

impl Splat2D {
    pub fn bbox_is_empty(&self) -> bool {
        self.bbox[0] > self.bbox[2] || self.bbox[1] > self.bbox[3]
    }

    /// Unclamped `α·G` at pixel `(px, py)`.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d.x;
        let dy = py - self.mean2d.y;
        let q = self.conic[(0, 0)] * dx * dx
            + 2.0 * self.conic[(0, 1)] * dx * dy
            + self.conic[(1, 1)] * dy * dy;
        self.base_opacity * (-0.5 * q).exp()
    }
}

pub(crate) fn projection_jacobian(cam: &Camera, t: &Vec3) -> Matrix2x3<f64> {
    let (x, y, z) = (t.x, t.y, t.z);
    let iz = 1.0 / z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * y * iz * iz,
    )
}

/// Projects without footprint culling; only the near plane culls.
pub(crate) fn project_unculled(
    g: &Gaussian3D,
    id: usize,
    cam: &Camera,
    rot: &Mat3,
    center: &Vec3,
    degree: ShDegree,
) -> Option<Splat2D> {
    let t = rot * g.position + cam.translation();
    if t.z <= NEAR_PLANE {
        return None;
    }
    let (u, v) = cam.project_cam(&t);
    let cov3 = build_covariance(g);
    let m = rot * cov3 * rot.transpose();
    let j = projection_jacobian(cam, &t);
    let mut cov2: Mat2 = j * m * j.transpose();
    cov2[(0, 1)] = 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]);
    cov2[(1, 0)] = cov2[(0, 1)];
    cov2[(0, 0)] += LOW_PASS;
    cov2[(1, 1)] += LOW_PASS;
    let det = cov2.determinant();
    if !(det > 0.0) {
        return None;
    }
    let conic = Mat2::new(
        cov2[(1, 1)] / det,
        -cov2[(0, 1)] / det,
        -cov2[(1, 0)] / det,
        cov2[(0, 0)] / det,
    );

    let dir = (g.position - center).normalize();
    let raw = raw_color(g, &dir, degree);
    let rgb = raw.map(|c| c.max(0.0));
    let base_opacity = g.opacity();

    let mean2d = Vector2::new(u, v);
    let bbox = support_bbox(&mean2d, &cov2, base_opacity, cam);
    Some(Splat2D {
        gaussian_id: id,
        mean2d,
        cov2d: cov2,
        conic,
        depth: t.z,
        base_opacity,
        rgb,
        bbox,
        cam_point: t,
        rgb_active: [raw.x > 0.0, raw.y > 0.0, raw.z > 0.0],
    })
}

/// Pixel bounds of `{δ : α exp(-½ δᵀ Σ⁻¹ δ) ≥ ALPHA_MIN}`.
fn support_bbox(mean: &Vector2<f64>, cov2: &Mat2, alpha: f64, cam: &Camera) -> [i64; 4] {
    if alpha < ALPHA_MIN {
        return [0, 0, -1, -1];
    }
    let m2 = 2.0 * (alpha / ALPHA_MIN).ln();
    let hx = (m2 * cov2[(0, 0)]).sqrt();
    let hy = (m2 * cov2[(1, 1)]).sqrt();
    const MARGIN: f64 = 1e-6;
    let x0 = ((mean.x - hx - MARGIN).ceil().max(0.0)) as i64;
    let y0 = ((mean.y - hy - MARGIN).ceil().max(0.0)) as i64;
    let x1 = (mean.x + hx + MARGIN).floor().min(cam.width as f64 - 1.0) as i64;
    let y1 = (mean.y + hy + MARGIN).floor().min(cam.height as f64 - 1.0) as i64;
    [x0, y0, x1, y1]
}

/// EWA projection of one Gaussian. Returns `None` when the center is behind
/// the near plane or the opacity-aware footprint misses the image.
pub fn project(g: &Gaussian3D, id: usize, cam: &Camera, degree: ShDegree) -> Option<Splat2D> {
    let rot = cam.rotation();
    project_unculled(g, id, cam, &rot, &cam.center(), degree).filter(|s| !s.bbox_is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_camera() -> Camera {
        Camera::new(
            100,
            100,
            100.0,
            100.0,
            50.0,
            50.0,
            Mat3::identity(),
            Vec3::zeros(),
        )
    }

    #[test]
    fn on_axis_projection() {
        let g = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.05, 0.8, Vec3::repeat(0.5));
        let s = project(&g, 0, &axis_camera(), ShDegree::Diffuse).unwrap();
        assert_eq!(s.mean2d, Vector2::new(50.0, 50.0));
        assert_eq!(s.depth, 1.0);
    }

    #[test]
    fn isotropic_covariance_matches_analytic_jacobian() {
        for (sigma, z0) in [(0.05, 1.0), (0.2, 3.0), (0.01, 0.5)] {
            let g = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, z0), sigma, 0.8, Vec3::repeat(0.5));
            let s = project(&g, 0, &axis_camera(), ShDegree::Diffuse).unwrap();
            // On axis the Jacobian is diag(fx/z0, fy/z0) with zero z-column.
            let expected = (100.0 * sigma / z0).powi(2) + 0.3;
            assert!((s.cov2d[(0, 0)] - expected).abs() < 1e-12 * expected);
            assert!((s.cov2d[(1, 1)] - expected).abs() < 1e-12 * expected);
            assert!(s.cov2d[(0, 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let g = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, -1.0), 0.05, 0.8, Vec3::repeat(0.5));
        assert!(project(&g, 0, &axis_camera(), ShDegree::Diffuse).is_none());
        let g = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, 0.005), 0.05, 0.8, Vec3::repeat(0.5));
        assert!(project(&g, 0, &axis_camera(), ShDegree::Diffuse).is_none());
    }

    #[test]
    fn off_screen_footprint_is_culled() {
        let g = Gaussian3D::isotropic(Vec3::new(5.0, 0.0, 1.0), 0.01, 0.8, Vec3::repeat(0.5));
        assert!(project(&g, 0, &axis_camera(), ShDegree::Diffuse).is_none());
        let faint = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.05, 0.001, Vec3::repeat(0.5));
        assert!(project(&faint, 0, &axis_camera(), ShDegree::Diffuse).is_none());
    }

    #[test]
    fn support_contains_every_reachable_pixel() {
        let g = Gaussian3D::isotropic(Vec3::new(0.03, -0.02, 1.0), 0.04, 0.9, Vec3::repeat(0.5));
        let cam = axis_camera();
        let s = project(&g, 0, &cam, ShDegree::Diffuse).unwrap();
        for y in 0..100i64 {
            for x in 0..100i64 {
                let inside = x >= s.bbox[0] && x <= s.bbox[2] && y >= s.bbox[1] && y <= s.bbox[3];
                if !inside {
                    assert!(s.alpha_at(x as f64, y as f64) < ALPHA_MIN);
                }
            }
        }
    }
}
