use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A variance was requested on a batch with fewer than two rows.
    #[error("batch of size {b} has no sample variance (need b >= 2)")]
    DegenerateBatch { b: usize },
    /// The mean gradient is exactly zero, so projections onto it are undefined.
    #[error("mean gradient is zero")]
    ZeroMeanGradient,
    /// The squared batch-gradient norm fell below the guard; the test statistic is undefined.
    #[error("squared batch gradient norm {sq_norm:e} is below the guard {guard:e}")]
    NearStationaryAmbiguity { sq_norm: f64, guard: f64 },
    #[error("sample index {index} out of range for dataset of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    /// The exact-variance test that a diagnostic presupposes does not hold.
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
