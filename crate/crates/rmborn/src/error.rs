//! Error type shared by every module.

use thiserror::Error;

/// Failures surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An exact integer result does not fit the supported range.
    #[error("{what}: argument {arg} outside the supported range (max {max})")]
    Range { what: &'static str, arg: u64, max: u64 },

    /// A parameter lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A quadrature or extrapolation did not reach the requested accuracy.
    #[error("numerical error: {message} (value {value:e}, error estimate {error:e})")]
    Numerical { message: String, value: f64, error: f64 },

    /// A series truncation left a tail above tolerance.
    #[error("truncation error: tail bound {tail:e} exceeds tolerance {tolerance:e} at n_max = {n_max}")]
    Truncation { tail: f64, tolerance: f64, n_max: u64 },

    /// A computed probability left the region allowed by its bounds.
    #[error("bound violation: {0}")]
    BoundViolation(String),

    /// The loose bounds stopped being meaningful probabilities.
    #[error("horizon exceeded at n = {n}")]
    HorizonExceeded { n: u64 },

    /// The kernel does not satisfy the monotonicity hypotheses the bounds rely on.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A finite-dimensional model is not internally consistent.
    #[error("model error: {0}")]
    Model(String),

    /// Every hypothesis assigns zero likelihood to the observed data.
    #[error("degenerate evidence: all likelihoods vanish")]
    DegenerateEvidence,
}

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;
