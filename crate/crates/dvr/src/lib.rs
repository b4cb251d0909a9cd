//! Reference direct volume renderer that produces every ground-truth image:
//! scalar volumes, 1D transfer functions, ray marching with Blinn-Phong
//! shading, camera rigs and the on-disk dataset format.

pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod raymarch;
pub mod tf;
pub mod views;
pub mod volume;

pub use dataset::{Dataset, Manifest};
pub use error::{DvrError, Result};
pub use raymarch::{MarchSettings, ShadingCoefficients};
pub use tf::{TfSet, TransferFunction};
pub use volume::{Volume, VolumeSpec};
