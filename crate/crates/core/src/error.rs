use thiserror::Error;

/// Errors raised by the anchor modelling library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (hyperparameters, column names, grids).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or invalid input data.
    #[error("data error: {0}")]
    Data(String),

    /// An operation that the given data representation does not support.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// An iterative solver stopped without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (last change {last_delta:e}): {context}")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        context: String,
    },

    /// Non-finite values or singular systems during numerical work.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Classifies the error into the broad category used for CLI exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Unsupported(_) => ErrorKind::Config,
            Error::Data(_) | Error::Shape { .. } | Error::Io(_) | Error::Json(_) => ErrorKind::Data,
            Error::NonConvergence { .. } | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}
