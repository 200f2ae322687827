use thiserror::Error;

/// Errors raised by the channel model, estimators and identity checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("signal-to-noise scale must be nonnegative and finite, got {0}")]
    InvalidRho(f64),

    #[error("truncation level must lie in [0, 1], got {0}")]
    ThetaOutOfRange(f64),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("enumeration unavailable for {0} prior")]
    EnumerationUnavailable(&'static str),

    #[error("closed-form evaluation unavailable for {0} prior")]
    ExactnessRequired(&'static str),

    #[error("operation not supported for {0} prior")]
    UnsupportedPrior(&'static str),

    #[error("invalid Monte-Carlo configuration: {0}")]
    McConfig(String),

    #[error("all importance weights underflowed")]
    WeightsUnderflow,

    #[error("missing analytic {0}")]
    MissingAnalytic(&'static str),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
