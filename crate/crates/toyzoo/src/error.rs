use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("curvature matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("curvature matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no samples to score")]
    EmptySamples,
    #[error("invalid index range [{start}, {end}) for {len} keys")]
    InvalidRange { start: usize, end: usize, len: usize },
    #[error("attention row {row} of head {head} sums to {sum}")]
    NotStochastic { head: usize, row: usize, sum: f64 },
    #[error("invalid setting: {0}")]
    Config(String),
    #[error("sample file: {0}")]
    Samples(String),
    #[error(transparent)]
    Core(#[from] tolcone_core::Error),
}

impl From<csv::Error> for ToyError {
    fn from(e: csv::Error) -> Self {
        ToyError::Samples(e.to_string())
    }
}

impl From<std::io::Error> for ToyError {
    fn from(e: std::io::Error) -> Self {
        ToyError::Samples(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ToyError>;
