//! Core numerics for editable volume splats.
//!
//! Everything in this crate is generic over [`Real`] so the same kernels run
//! in `f32` for training and rendering and in `f64` for gradient checks.

pub mod camera;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod shading;
pub mod sh;

pub use camera::Camera;
pub use error::{CoreError, Result};
pub use image::RgbaImage;
pub use math::Real;
