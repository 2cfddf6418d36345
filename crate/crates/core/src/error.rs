use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RsmError>;

#[derive(Debug, Error)]
pub enum RsmError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("bootstrap replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<RsmError>,
    },

    #[error("shuffle {shuffle}, fold {fold}: {source}")]
    Fold {
        shuffle: usize,
        fold: usize,
        #[source]
        source: Box<RsmError>,
    },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RsmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RsmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_replicate(self, replicate: usize) -> Self {
        RsmError::Replicate {
            replicate,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_fold(self, shuffle: usize, fold: usize) -> Self {
        RsmError::Fold {
            shuffle,
            fold,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(RsmError::Dimension { expected, found })
    }
}
