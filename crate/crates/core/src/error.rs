use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("{0} is not symmetric positive semi-definite")]
    NotPositiveSemiDefinite(&'static str),

    #[error("unstable: spectral radius {radius} >= 1 ({context})")]
    Unstable { context: &'static str, radius: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    #[error("(A, B) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("(A, C) is not detectable: {0}")]
    NotDetectable(String),

    #[error("mode matrix {0} is nilpotent")]
    Nilpotent(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for failures caused by the numbers rather than the shape of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. }
                | Error::NotConverged { .. }
                | Error::NotStabilizable(_)
                | Error::NotDetectable(_)
                | Error::Nilpotent(_)
        )
    }
}
