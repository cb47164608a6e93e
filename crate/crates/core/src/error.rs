use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("inconsistent portfolio: {message} (keys: {})", keys.join("; "))]
    Consistency { message: String, keys: Vec<String> },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// `y = 0` paired with a positive claim count, or the reverse.
    #[error("outside the compound Poisson support: {0}")]
    Support(String),

    #[error("no convergence after {iterations} iterations (last coefficients {last:?})")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("fold assignment: {0}")]
    FoldAssignment(String),

    #[error("every candidate failed: {}", .0.join("; "))]
    AllFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
