use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector must have at least one entry")]
    Empty,

    #[error("non-finite value {value} at index {index} of {what}")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("preservation gradient has zero norm; the multiplier is undefined")]
    DegeneratePreservation,

    #[error("non-finite {what} at step {step}: {value}")]
    NonFiniteLoss {
        what: &'static str,
        step: usize,
        value: f64,
    },

    #[error("objective evaluation failed at probe {index}: value {value}")]
    Evaluation { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle did not converge: {0}")]
    OracleNonConvergence(String),

    #[error("missing instrumentation: {0}")]
    MissingInstrumentation(&'static str),

    #[error("trace format: {0}")]
    TraceFormat(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::TraceFormat(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::TraceFormat(e.to_string())
    }
}
