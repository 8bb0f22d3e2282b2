//! Differentiable splatting renderer.
//!
//! Gaussians are projected to screen-space splats, globally depth-sorted
//! (ties broken by Gaussian index) and alpha-blended front to back over a
//! black background. The same blending weights produce the depth image.

mod backward;
mod forward;
mod project;
mod reference;

pub use backward::{backward, GradBuffers};
pub use forward::{render, RenderOutput};
pub use project::{project, Splat2D};
pub use reference::{render_reference, ReferenceRender};

/// Splats closer than this (camera-space z) are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic low-pass dilation added to every screen-space covariance.
pub const LOW_PASS: f64 = 0.3;
/// Upper clamp on per-pixel splat opacity.
pub const ALPHA_MAX: f64 = 0.99;
/// Per-pixel opacities below this are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Blending stops before transmittance would fall below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Tile edge length in pixels.
pub const TILE_SIZE: usize = 16;
