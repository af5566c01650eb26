use thiserror::Error;

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("trace {0} differs from 1")]
    BadTrace(f64),

    #[error("all samples are identical, bin width is degenerate")]
    DegenerateWidth,

    #[error("rejection sampler failed: acceptance rate {rate:e} after {proposals} proposals")]
    SamplerFailure { rate: f64, proposals: u64 },

    #[error("trust radius underflow ({0:e})")]
    Stagnation(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TomoError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TomoError::InvalidInput(msg.into()))
}
