use thiserror::Error;

/// Errors produced anywhere in the realization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero range: input matrix has no nonzero column space")]
    ZeroRange,

    #[error("iterative kernel did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("tolerance unreachable: basis reached {columns} columns without certification")]
    ToleranceUnreachable { columns: usize },

    #[error("order too high for data: {0}")]
    OrderTooHigh(String),

    #[error("insufficient excitation: regressor rank {rank} < {needed}")]
    InsufficientExcitation { rank: usize, needed: usize },

    #[error("system is not Schur stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs' format.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroRange
                | Error::NoConvergence { .. }
                | Error::ToleranceUnreachable { .. }
                | Error::OrderTooHigh(_)
                | Error::InsufficientExcitation { .. }
                | Error::Unstable { .. }
        )
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
