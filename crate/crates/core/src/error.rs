use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a {expected} space, got {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("operator is not Hermitian (max deviation {max_deviation:.3e})")]
    NotHermitian { max_deviation: f64 },

    #[error("chart boundary: {0}")]
    ChartBoundary(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("unsupported operator word: {0}")]
    UnsupportedWord(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad input rather than by a numerical method.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::KindMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotHermitian { .. }
                | Error::ChartBoundary(_)
                | Error::Parse { .. }
                | Error::UnsupportedWord(_)
        )
    }
}
