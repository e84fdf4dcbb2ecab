use thiserror::Error;

/// Errors produced anywhere in the key-rate and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity that must be strictly positive (a measured variance, a pivot) is not.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    /// A covariance matrix that violates positivity or the uncertainty relation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate modulation: {0}")]
    DegenerateModulation(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("remap error: {0}")]
    Remap(String),

    /// Punctured code rate exceeds the mutual information it is meant to approach.
    #[error("reconciliation efficiency beta = {beta:.6} exceeds 1 (R_punc = {rate:.6}, I = {mutual_information:.6})")]
    ImpossibleEfficiency {
        beta: f64,
        rate: f64,
        mutual_information: f64,
    },

    #[error("frame format: {0}")]
    FrameFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
