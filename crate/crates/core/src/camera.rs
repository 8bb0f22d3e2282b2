//! Pinhole cameras and the camera JSON format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{rotation_of_unit, rotation_to_quat, slerp, Mat3, Vec3};

/// Pinhole camera with OpenCV axes (x right, y down, z forward). Pixel
/// centers sit at integer coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(default)]
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Rigid world-to-camera transform, row-major 4×4.
    pub world_to_camera: [f64; 16],
}

impl Camera {
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
    ) -> Self {
        let mut m = [0.0; 16];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 4 + c] = rotation[(r, c)];
            }
            m[r * 4 + 3] = translation[r];
        }
        m[15] = 1.0;
        Self {
            id: String::new(),
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            world_to_camera: m,
        }
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up
    /// direction (image y points away from it).
    pub fn look_at(width: u32, height: u32, focal: f64, eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rot = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        Self::new(
            width,
            height,
            focal,
            focal,
            (width as f64 - 1.0) * 0.5,
            (height as f64 - 1.0) * 0.5,
            rot,
            t,
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn rotation(&self) -> Mat3 {
        let m = &self.world_to_camera;
        Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10])
    }

    pub fn translation(&self) -> Vec3 {
        let m = &self.world_to_camera;
        Vec3::new(m[3], m[7], m[11])
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }

    pub fn to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p_cam - self.translation())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Pixel coordinates of a camera-space point (requires z > 0).
    pub fn project_cam(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-space point at pixel `(u, v)` with depth `z`.
    pub fn unproject_cam(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// World point at pixel `(u, v)` with camera-space depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        self.to_world(&self.unproject_cam(u, v, z))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return invalid(format!("camera '{}' has zero-sized image", self.id));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return invalid(format!("camera '{}' needs positive focal lengths", self.id));
        }
        let r = self.rotation();
        let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return invalid(format!(
                "camera '{}' rotation block is not a proper rotation",
                self.id
            ));
        }
        let m = &self.world_to_camera;
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return invalid(format!(
                "camera '{}' transform has a non-rigid last row",
                self.id
            ));
        }
        Ok(())
    }

    /// Pose interpolation: slerp on rotation, lerp on camera center.
    /// Intrinsics come from `self`.
    pub fn interpolate(&self, other: &Camera, t: f64) -> Camera {
        let qa = rotation_to_quat(&self.rotation());
        let qb = rotation_to_quat(&other.rotation());
        let rot = rotation_of_unit(&slerp(&qa, &qb, t));
        let center = self.center() * (1.0 - t) + other.center() * t;
        let mut cam = Camera::new(
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            rot,
            -(rot * center),
        );
        cam.id = format!("{}~{}@{t:.4}", self.id, other.id);
        cam
    }
}

/// Evenly spaced poses from `start` to `end` inclusive; a single frame is
/// `start` itself.
pub fn camera_path(start: &Camera, end: &Camera, frames: usize) -> Vec<Camera> {
    match frames {
        0 => Vec::new(),
        1 => vec![start.clone()],
        n => (0..n)
            .map(|i| start.interpolate(end, i as f64 / (n - 1) as f64))
            .collect(),
    }
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path)?;
    let cams: Vec<Camera> = serde_json::from_str(&text)?;
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

pub fn save_cameras(path: &Path, cams: &[Camera]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(cams)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at(
            64,
            48,
            50.0,
            Vec3::new(1.0, -2.0, 3.0),
            Vec3::zeros(),
            Vec3::z(),
        );
        cam.validate().unwrap();
        let p = cam.to_camera(&Vec3::zeros());
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!((cam.center() - Vec3::new(1.0, -2.0, 3.0)).norm() < 1e-12);
        // world up projects toward the top of the image
        let above = cam.to_camera(&Vec3::new(0.0, 0.0, 0.5));
        assert!(above.y < 0.0);
    }

    #[test]
    fn unproject_inverts_projection() {
        let cam = Camera::look_at(
            32,
            32,
            40.0,
            Vec3::new(0.0, 0.0, -3.0),
            Vec3::zeros(),
            -Vec3::y(),
        );
        let p = Vec3::new(0.3, -0.2, 2.5);
        let (u, v) = cam.project_cam(&p);
        assert!((cam.unproject_cam(u, v, p.z) - p).norm() < 1e-12);
        let w = Vec3::new(0.4, 0.1, -0.7);
        let pc = cam.to_camera(&w);
        let (u, v) = cam.project_cam(&pc);
        assert!((cam.unproject(u, v, pc.z) - w).norm() < 1e-12);
    }

    #[test]
    fn path_endpoints_and_single_frame() {
        let a = Camera::look_at(
            16,
            16,
            20.0,
            Vec3::new(0.0, -3.0, 0.5),
            Vec3::zeros(),
            Vec3::z(),
        );
        let b = Camera::look_at(
            16,
            16,
            20.0,
            Vec3::new(2.0, -2.0, 0.5),
            Vec3::zeros(),
            Vec3::z(),
        );
        let path = camera_path(&a, &b, 5);
        assert_eq!(path.len(), 5);
        assert!((path[4].center() - b.center()).norm() < 1e-12);
        assert!((path[4].rotation() - b.rotation()).abs().max() < 1e-12);
        let single = camera_path(&a, &b, 1);
        assert_eq!(single[0], a);
        let same = camera_path(&a, &a, 4);
        for c in &same {
            assert!((c.rotation() - a.rotation()).abs().max() < 1e-12);
            assert!((c.center() - a.center()).norm() < 1e-12);
        }
    }

    #[test]
    fn validate_rejects_bad_cameras() {
        let mut c = Camera::look_at(
            16,
            16,
            20.0,
            Vec3::new(0.0, -3.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
        );
        c.fx = 0.0;
        assert!(c.validate().is_err());
        let mut c = Camera::look_at(
            16,
            16,
            20.0,
            Vec3::new(0.0, -3.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
        );
        c.world_to_camera[0] = 2.0;
        assert!(c.validate().is_err());
        let mut c = Camera::look_at(
            16,
            16,
            20.0,
            Vec3::new(0.0, -3.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
        );
        c.width = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.json");
        let cams = vec![Camera::look_at(
            16,
            12,
            20.0,
            Vec3::new(0.0, -3.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
        )
        .with_id("a")];
        save_cameras(&path, &cams).unwrap();
        assert_eq!(load_cameras(&path).unwrap(), cams);
    }
}
