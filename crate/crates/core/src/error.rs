use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite ({0})")]
    NonPositiveDefinite(&'static str),

    #[error("cholesky factorization failed after jitter escalation ({0})")]
    CholeskyFailure(&'static str),

    #[error("objective became non-finite")]
    NonFinite,

    #[error("site update skipped: {0}")]
    UpdateSkipped(String),

    #[error("cavity distribution is indefinite at t = {t}")]
    IndefiniteCavity { t: usize },

    #[error("every site update in sweep {iteration} was skipped")]
    Divergence { iteration: usize },

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("pendulum tip coincides with sensor {sensor}")]
    SensorCoincidence { sensor: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
