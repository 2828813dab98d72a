use thiserror::Error;

/// Errors raised anywhere in the evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge on [{lower}, {upper}]: estimated error {achieved:e}, requested {requested:e}")]
    Quadrature {
        lower: f64,
        upper: f64,
        achieved: f64,
        requested: f64,
    },

    #[error(
        "root finding did not converge after {iterations} iterations (bracket width {width:e})"
    )]
    RootFinding { iterations: usize, width: f64 },

    /// Covariance of the simulated observations could not be factorised,
    /// even after ridge regularisation.
    #[error("covariance matrix of subject {subject} is not positive definite")]
    NotPositiveDefinite { subject: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("study {study} (seed {seed}) failed: {source}")]
    Study {
        study: usize,
        seed: u64,
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Study { source, .. } => source.is_numerical(),
            _ => matches!(
                self,
                Error::Quadrature { .. } | Error::RootFinding { .. } | Error::NotPositiveDefinite { .. }
            ),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
