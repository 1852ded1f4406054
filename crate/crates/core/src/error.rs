use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The generalized-normal score is unbounded at zero displacement when beta < 1.
    #[error("singular score: beta = {beta} < 1 at zero displacement")]
    SingularScore { beta: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at step {step} (sigma = {sigma}): {reason}")]
    Training { step: usize, sigma: f64, reason: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by bad input (parameters outside their
    /// domain, malformed files, mismatched shapes) rather than numerics or I/O.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Schedule(_)
                | Error::Dimension { .. }
                | Error::Config(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
