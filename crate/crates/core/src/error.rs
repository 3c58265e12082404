use thiserror::Error;

use crate::solvers::Trace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("closed-form theta {theta} lies outside the grid bracket [{min}, {max}]")]
    BracketTooSmall { theta: f64, min: f64, max: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("solver diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        trace: Box<Trace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) => 1,
            Error::Diverged { .. } => 3,
            _ => 2,
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
