use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarError>;

#[derive(Debug, Error)]
pub enum HarError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called without a cached forward pass in {0}")]
    NoForwardCache(&'static str),

    #[error("non-finite parameter {name} after epoch {epoch}")]
    NonFinite { name: String, epoch: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl HarError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        HarError::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HarError::InvalidArgument(msg.into())
    }
}
