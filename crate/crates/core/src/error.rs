use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation requires a Gaussian kernel: {0}")]
    UnsupportedKernel(&'static str),

    /// Epanechnikov iterate with no data point inside its support.
    #[error("no data point within the kernel support of the iterate")]
    IsolatedPoint,

    #[error("no bandwidth reproduces perplexity {perplexity} for point {point}")]
    NoBandwidthSolution { point: usize, perplexity: f64 },

    #[error("query lies outside the support of the conditional density")]
    OutOfSupport,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical procedure itself rather than of
    /// the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IsolatedPoint | Error::NoBandwidthSolution { .. } | Error::OutOfSupport
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
