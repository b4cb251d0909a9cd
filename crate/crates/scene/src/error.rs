use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] volsplat_core::CoreError),
    #[error("not an IVRG file")]
    BadMagic,
    #[error("unsupported IVRG version {0}")]
    VersionUnsupported(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("corrupt index {index} >= {k} in codebook `{attribute}`")]
    CorruptIndex { attribute: String, index: u32, k: u32 },
    #[error("cannot compose models of different stages (base models need stage-2 training first)")]
    MixedStage,
    #[error("expected a {expected} model")]
    WrongStage { expected: &'static str },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, SceneError>;
