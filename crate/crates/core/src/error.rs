use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported for {model}: {what}")]
    Unsupported { model: &'static str, what: String },

    #[error("eigendecomposition of {name} ({dim}x{dim}) did not converge")]
    NoConvergence { name: String, dim: usize },

    #[error("eigenvalue tracking failed at parameter index {index}: {reason}")]
    Tracking { index: usize, reason: String },

    #[error("solvability violated for {pairing}: residual {residual:.3e}")]
    Fredholm { pairing: String, residual: f64 },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("absorbing state {state} reached at t = {t}")]
    Absorbing { state: usize, t: f64 },

    #[error("gauge undefined: overlap magnitude {0:.3e}")]
    GaugeUndefined(f64),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Unsupported { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
