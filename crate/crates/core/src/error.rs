use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Failing certificates are *not* errors; they are returned as reports with
/// a negative verdict.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (defect {defect:e} exceeds {tol:e})")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("truncation too coarse: {0}")]
    Truncation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
