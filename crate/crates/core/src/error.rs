use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest error at {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
