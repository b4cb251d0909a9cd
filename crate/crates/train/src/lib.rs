//! Optimization of editable splat models from DVR images: stage-1 base
//! training, stage-2 editable training, adaptive density control and
//! inverse fitting of edit parameters to a reference image.

pub mod adam;
pub mod config;
pub mod data;
pub mod densify;
pub mod error;
pub mod init;
pub mod inverse;
pub mod splats;
pub mod train;

pub use config::{LearningRates, TrainConfig};
pub use data::{foreground_palette, TrainData, View};
pub use densify::{densify_and_prune, DensifyReport, GradStats};
pub use error::{Result, TrainError};
pub use inverse::{init_transform, optimize_to_reference, InverseConfig, InverseResult, TransformParams};
pub use train::{mean_psnr, train, train_base, train_base_from, train_editable, LogRecord, LossBreakdown, TrainOutput, Trainer};
