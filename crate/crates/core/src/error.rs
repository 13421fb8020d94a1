use thiserror::Error;

/// Errors raised by model construction, geometry and the numerical checks.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate or parameter lies outside the chart or validity range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The operation is defined but its precondition does not hold for this input.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inconsistent metric data: {0}")]
    InconsistentMetric(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    /// The discretization is too coarse (e.g. the kernel graph is disconnected).
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
