use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computed quantity violated an internal consistency check.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An iterative procedure hit its budget before meeting its tolerance.
    #[error("no convergence: {reason} (partial value {partial}, estimate {estimate:e})")]
    NoConvergence {
        reason: String,
        partial: f64,
        estimate: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
