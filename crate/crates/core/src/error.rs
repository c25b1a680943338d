use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("oracle does not support {0} queries")]
    Unsupported(&'static str),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("decision-mode initializer is classified as {found}, not the target class {target}")]
    InfeasibleInitializer { target: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("malformed input at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unsupported weight file version {} (this build reads version {})", *.found as char, *.expected as char)]
    VersionMismatch { found: u8, expected: u8 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
