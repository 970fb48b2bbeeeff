//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AmuseError>;

#[derive(Error, Debug)]
pub enum AmuseError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid argument: {message}")]
    InvalidArgument { op: &'static str, message: String },

    #[error("no gradient rule registered for op '{op}'")]
    UnsupportedOp { op: String },

    #[error("non-finite gradient for parameter '{param}' (step {step})")]
    NanGradient { param: String, step: u64 },

    #[error("config field '{field}': {message}")]
    Config { field: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Data(String),

    #[error("audio: {0}")]
    Audio(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl AmuseError {
    pub fn invalid(op: &'static str, message: impl Into<String>) -> Self {
        AmuseError::InvalidArgument {
            op,
            message: message.into(),
        }
    }

    pub fn shapes(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        AmuseError::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
