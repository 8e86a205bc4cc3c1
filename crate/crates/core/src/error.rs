use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HaruError>;

#[derive(Debug, Error)]
pub enum HaruError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("{0}")]
    Invalid(String),
}

impl HaruError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HaruError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the file system rather than by bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, HaruError::Io { .. })
    }
}
