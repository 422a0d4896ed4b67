use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid instance at line {line}: {message}")]
    InvalidInstance { line: usize, message: String },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("vocabulary hash mismatch: model expects {expected}, got {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
