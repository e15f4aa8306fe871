use thiserror::Error;

/// Errors raised by the estimation and testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("optimizer failed: {reason} (best value {value:e} at {best:?})")]
    Optimization {
        reason: String,
        best: Vec<f64>,
        value: f64,
    },

    #[error("{role} is not positive definite")]
    NotPositiveDefinite { role: String },

    #[error("{role} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { role: String, condition: f64 },

    #[error("{role} is rank deficient")]
    RankDeficient { role: String },

    #[error("series for {what} did not terminate within {cap} terms")]
    SeriesCap { what: &'static str, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Dimension(_) | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
