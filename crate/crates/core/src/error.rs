use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("support overflow: {0}")]
    SupportOverflow(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("cancellation violated: {0}")]
    Cancellation(String),
    #[error("singular support: {0}")]
    SingularSupport(String),
    #[error("parity error: {0}")]
    Parity(String),
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
    #[error("time-step error: {0}")]
    TimeStep(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by insufficient grid or budget resolution
    /// rather than malformed input.
    pub fn is_resolution(&self) -> bool {
        matches!(self, Error::Resolution(_) | Error::TimeStep(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
