use thiserror::Error;

#[derive(Debug, Error)]
pub enum DvrError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] volsplat_core::CoreError),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("invalid transfer function: {0}")]
    InvalidTf(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("malformed dataset: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, DvrError>;
