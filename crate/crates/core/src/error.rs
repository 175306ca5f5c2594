use thiserror::Error;

use crate::fockspace::ModeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),

    #[error("space dimension {dim} = {product} exceeds the cap of {cap}")]
    Capacity { product: String, dim: u128, cap: u128 },

    #[error("mode {0} is not part of this space")]
    UnknownMode(ModeId),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("band gap closes at t1 = t2 = {0}; the winding number is undefined")]
    GapClosing(f64),

    #[error("integrator step size collapsed to {step:e} at t = {time}")]
    StepSizeCollapse { time: f64, step: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("steady state is not unique: Liouvillian kernel has dimension {0}")]
    AmbiguousSteadyState(usize),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("operator is not positive semidefinite: {0}")]
    NotPositive(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
}
