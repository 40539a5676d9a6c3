use thiserror::Error;

use crate::spd::SpdMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Iterative mean did not reach the requested gradient norm.
    #[error("no convergence after {iterations} iterations (gradient norm {residual:e})")]
    ConvergenceFailure {
        iterations: usize,
        residual: f64,
        last_iterate: Box<SpdMatrix>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NumericOverflow(_)
            | Error::NumericFailure(_)
            | Error::ConvergenceFailure { .. } => true,
            Error::Fold { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
