use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the smoothing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("operator rank {spec} does not match field rank {field}")]
    RankMismatch { spec: usize, field: usize },

    #[error("stack has {actual} layers but the operator has {expected} components")]
    LayerCount { expected: usize, actual: usize },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("padding {pad} too large for a {height}x{width} field")]
    PadTooLarge {
        pad: usize,
        height: usize,
        width: usize,
    },

    #[error("crop of {crop} leaves no interior in a {height}x{width} field")]
    CropTooLarge {
        crop: usize,
        height: usize,
        width: usize,
    },

    #[error("problem size {size} exceeds the limit of {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("value {value} at index {index} is outside [0, 1] and clamping is disabled")]
    OutOfRange { index: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by non-finite numbers rather than bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// True for errors originating in the filesystem or file decoding.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Malformed { .. } | Error::UnsupportedFormat(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
