//! Gaussian primitives and the scene container.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::SymmetricEigen;

use crate::error::{invalid, Result};
use crate::math::{quat_to_rotation, rotation_of_unit, sigmoid, Mat3, Quat, Vec3, IDENTITY_QUAT};

/// Constant term of the real spherical-harmonic basis.
pub const SH_C0: f64 = 0.28209479177387814;
/// Magnitude of the three linear spherical-harmonic basis functions.
pub const SH_C1: f64 = 0.4886025119029199;

/// Smallest per-axis standard deviation used when evaluating a Gaussian.
pub const MIN_LOG_SCALE: f64 = -20.0;

/// Spherical-harmonic degree used for color evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShDegree {
    Diffuse = 0,
    Linear = 1,
}

impl ShDegree {
    pub fn from_u8(d: u8) -> Result<Self> {
        match d {
            0 => Ok(Self::Diffuse),
            1 => Ok(Self::Linear),
            _ => invalid(format!("unsupported SH degree {d}")),
        }
    }
}

/// One anisotropic 3D Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub position: Vec3,
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: Quat,
    /// Natural log of the per-axis standard deviation.
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    /// DC spherical-harmonic coefficient per RGB channel.
    pub color_dc: Vec3,
    /// Degree-1 coefficients, indexed `[basis][channel]`.
    pub color_rest: Option<[Vec3; 3]>,
}

impl Gaussian3D {
    pub fn isotropic(position: Vec3, sigma: f64, opacity: f64, rgb: Vec3) -> Self {
        Self {
            position,
            rotation: IDENTITY_QUAT,
            log_scale: Vec3::repeat(sigma.ln()),
            opacity_logit: crate::math::logit(opacity),
            color_dc: rgb_to_dc(&rgb),
            color_rest: None,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    /// Per-axis standard deviations, clamped below at `exp(MIN_LOG_SCALE)`.
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(|s| s.max(MIN_LOG_SCALE).exp())
    }

    pub fn rotation_matrix(&self) -> Result<Mat3> {
        quat_to_rotation(&self.rotation)
    }

    pub fn degree(&self) -> ShDegree {
        if self.color_rest.is_some() {
            ShDegree::Linear
        } else {
            ShDegree::Diffuse
        }
    }
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn build_covariance(g: &Gaussian3D) -> Mat3 {
    let r = match crate::math::normalize_quat(&g.rotation) {
        Ok(q) => rotation_of_unit(&q),
        Err(_) => Mat3::identity(),
    };
    let l = r * Mat3::from_diagonal(&g.scale());
    let cov = l * l.transpose();
    // exact symmetry
    (cov + cov.transpose()) * 0.5
}

/// Unnormalized Gaussian influence `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn eval_gaussian(g: &Gaussian3D, x: &Vec3) -> f64 {
    let r = match crate::math::normalize_quat(&g.rotation) {
        Ok(q) => rotation_of_unit(&q),
        Err(_) => Mat3::identity(),
    };
    // Σ⁻¹ = R S⁻² Rᵀ, so the quadratic form is |S⁻¹ Rᵀ d|².
    let local = r.transpose() * (x - g.position);
    let s = g.scale();
    let z = local.component_div(&s);
    (-0.5 * z.norm_squared()).exp()
}

pub fn rgb_to_dc(rgb: &Vec3) -> Vec3 {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

pub fn dc_to_rgb(dc: &Vec3) -> Vec3 {
    dc.map(|c| 0.5 + SH_C0 * c)
}

/// Linear SH basis values `(-C1 y, C1 z, -C1 x)` for a unit direction.
pub fn sh_linear_basis(dir: &Vec3) -> [f64; 3] {
    [-SH_C1 * dir.y, SH_C1 * dir.z, -SH_C1 * dir.x]
}

/// RGB color of a Gaussian seen along `view_dir` (unit, from camera to
/// Gaussian). Output is clamped to be non-negative.
pub fn eval_color(g: &Gaussian3D, view_dir: &Vec3, degree: ShDegree) -> Result<Vec3> {
    if degree > g.degree() {
        return invalid(format!(
            "requested SH degree {:?} exceeds stored degree {:?}",
            degree,
            g.degree()
        ));
    }
    Ok(raw_color(g, view_dir, degree).map(|c| c.max(0.0)))
}

pub(crate) fn raw_color(g: &Gaussian3D, view_dir: &Vec3, degree: ShDegree) -> Vec3 {
    let mut rgb = dc_to_rgb(&g.color_dc);
    if degree == ShDegree::Linear {
        if let Some(rest) = &g.color_rest {
            let basis = sh_linear_basis(view_dir);
            for (b, coeff) in basis.iter().zip(rest.iter()) {
                rgb += coeff * *b;
            }
        }
    }
    rgb
}

static NEXT_REVISION: AtomicU64 = AtomicU64::new(1);

fn fresh_revision() -> u64 {
    NEXT_REVISION.fetch_add(1, Ordering::Relaxed)
}

/// A set of Gaussians with their density-control statistics.
///
/// Direct access to the Gaussians goes through [`GaussianScene::gaussians_mut`],
/// which stamps a new revision so stale render outputs can be detected.
#[derive(Clone, Debug)]
pub struct GaussianScene {
    gaussians: Vec<Gaussian3D>,
    revision: u64,
    /// Sum of per-iteration color-gradient norms.
    pub color_grad_accum: Vec<f64>,
    /// Sum of per-iteration projected-position gradient norms.
    pub pos_grad_accum: Vec<f64>,
    /// Number of iterations in which the Gaussian received a gradient.
    pub contrib_count: Vec<u32>,
}

impl PartialEq for GaussianScene {
    fn eq(&self, other: &Self) -> bool {
        self.gaussians == other.gaussians
            && self.color_grad_accum == other.color_grad_accum
            && self.pos_grad_accum == other.pos_grad_accum
            && self.contrib_count == other.contrib_count
    }
}

impl Default for GaussianScene {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        let n = gaussians.len();
        Self {
            gaussians,
            revision: fresh_revision(),
            color_grad_accum: vec![0.0; n],
            pos_grad_accum: vec![0.0; n],
            contrib_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn gaussians(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    /// Mutable access to the Gaussians. Invalidates outstanding render outputs.
    pub fn gaussians_mut(&mut self) -> &mut [Gaussian3D] {
        self.revision = fresh_revision();
        &mut self.gaussians
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Replaces the Gaussian set; statistics are resized and zeroed.
    pub fn replace_gaussians(&mut self, gaussians: Vec<Gaussian3D>) {
        *self = Self::new(gaussians);
    }

    pub fn reset_stats(&mut self) {
        let n = self.len();
        self.color_grad_accum = vec![0.0; n];
        self.pos_grad_accum = vec![0.0; n];
        self.contrib_count = vec![0; n];
    }

    /// Keeps the Gaussians at `keep` (ascending) together with their statistics.
    pub(crate) fn retain_indices(&mut self, keep: &[usize]) {
        self.gaussians = keep.iter().map(|&i| self.gaussians[i].clone()).collect();
        self.color_grad_accum = keep.iter().map(|&i| self.color_grad_accum[i]).collect();
        self.pos_grad_accum = keep.iter().map(|&i| self.pos_grad_accum[i]).collect();
        self.contrib_count = keep.iter().map(|&i| self.contrib_count[i]).collect();
        self.revision = fresh_revision();
    }

    pub(crate) fn stats_consistent(&self) -> bool {
        let n = self.len();
        self.color_grad_accum.len() == n
            && self.pos_grad_accum.len() == n
            && self.contrib_count.len() == n
    }

    /// Highest SH degree shared by every Gaussian.
    pub fn sh_degree(&self) -> ShDegree {
        self.gaussians
            .iter()
            .map(Gaussian3D::degree)
            .min()
            .unwrap_or(ShDegree::Diffuse)
    }

    /// Drops higher-order color terms, leaving a diffuse-only scene.
    pub fn to_diffuse(&self) -> Self {
        let mut out = self.clone();
        for g in out.gaussians_mut() {
            g.color_rest = None;
        }
        out
    }

    /// Diameter of the bounding box of all Gaussian centers.
    pub fn extent(&self) -> f64 {
        bbox_diameter(self.gaussians.iter().map(|g| g.position))
    }
}

pub(crate) fn bbox_diameter(points: impl Iterator<Item = Vec3>) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}

/// Eigenvalues of a symmetric 3×3 matrix, ascending.
pub fn symmetric_eigenvalues(m: &Mat3) -> [f64; 3] {
    let eig = SymmetricEigen::new(*m);
    let mut v = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    v.sort_by(|a, b| a.total_cmp(b));
    v
}
