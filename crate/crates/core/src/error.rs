use thiserror::Error;

/// Errors raised by the simulation engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("capacity exceeded: {what} (limit {limit}, requested {requested})")]
    Capacity {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("mode grid configuration error: {reason} (measured gamma_eff = {gamma_eff:.6e})")]
    Configuration { reason: String, gamma_eff: f64 },

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("rate fit failure: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
