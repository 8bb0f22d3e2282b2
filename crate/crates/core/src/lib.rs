//! Differentiable 3D Gaussian splatting and reference-based appearance
//! stylization at desk scale.
//!
//! The pipeline: pretrain a small Gaussian scene from posed images
//! ([`train::pretrain`]), then re-optimize it against a content-aligned style
//! reference ([`train::stylize`]) with color-gradient guided densification
//! ([`control`]), depth regularization and depth-warped pseudo views
//! ([`stylize`]).

pub mod camera;
pub mod control;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod image;
pub mod math;
pub mod optim;
pub mod ply;
pub mod raster;
pub mod stylize;
pub mod synth;
pub mod train;

pub use camera::Camera;
pub use error::{DecodeError, Error, Result};
pub use gaussian::{Gaussian3D, GaussianScene, ShDegree};
pub use image::Image;
