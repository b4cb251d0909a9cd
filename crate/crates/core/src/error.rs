use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient at primitive {index} ({attribute})")]
    NonFiniteGradient { index: usize, attribute: &'static str },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("image io: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
