use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { layer: usize, expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("missing cached activation for layer {0}")]
    MissingActivation(usize),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format { what: &'static str, offset: u64, reason: String },

    #[error("unknown extraction point {0:?}")]
    UnknownPoint(String),

    #[error("class {class} has {available} examples but {needed} are required")]
    ClassTooSmall { class: usize, available: usize, needed: usize },

    #[error("relation between mixed attribute kinds")]
    MixedAttributes,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
