use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite {quantity} in domain {domain}")]
    NonFiniteDomain { domain: usize, quantity: &'static str },

    #[error("finite-difference evaluation is non-finite at component {component}")]
    NonFiniteComponent { component: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch size {batch_size} exceeds domain size {domain_size}")]
    BatchTooLarge { batch_size: usize, domain_size: usize },

    #[error("{what} did not converge (last residual {residual:e})")]
    NotConverged { what: &'static str, residual: f64 },

    #[error("bisection failed to converge within bracket [{lo:e}, {hi:e}]")]
    Bisection { lo: f64, hi: f64 },

    #[error("run diverged at iteration {iteration}")]
    Diverged { iteration: usize, last_theta: Vec<f64> },

    #[error("{0}")]
    Assertion(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
