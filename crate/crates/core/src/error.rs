use thiserror::Error;

/// Errors raised by the simulation, estimation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("subsampling factor K={k} out of range for n={n} (allowed {min}..={max})")]
    SubsamplingOutOfRange { k: usize, n: usize, min: usize, max: usize },

    #[error("not enough observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-positive variance plug-in {0:e}")]
    NonPositivePlugin(f64),

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("malformed tick data: {0}")]
    TickData(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::SubsamplingOutOfRange { .. }
                | Error::UnknownEstimator(_)
                | Error::TickData(_)
                | Error::Csv(_)
                | Error::Json(_)
        ) || matches!(self, Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
