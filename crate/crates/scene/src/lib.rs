//! Editable splat models: in-memory representation, `IVRG` persistence,
//! vector quantization, composition with edits, and render modes.

pub mod compose;
pub mod error;
pub mod format;
pub mod model;
pub mod render;
pub mod vq;

pub use compose::{apply_edits, compose, ComposedScene, EditState, EffectiveScene, SceneEdit};
pub use error::{Result, SceneError};
pub use format::{SceneFile, StoredModel};
pub use model::{Appearance, BasicSceneModel, Geometry, ModelMeta, Stage};
pub use render::{Attribute, RenderMode};
pub use vq::{dequantize_model, quantize_model, QuantizeConfig, QuantizedModel};
