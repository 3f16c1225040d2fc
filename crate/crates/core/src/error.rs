use thiserror::Error;

/// Failure modes shared by every module of the crate.
///
/// The split matters to callers: [`Error::InvalidParameter`] and
/// [`Error::Precondition`] mean the request itself was rejected, while
/// [`Error::Numerical`] reports a computation that ran and could not certify
/// its own result.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn num(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors that reject the input rather than the computation.
    pub fn is_rejection(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Precondition(_))
    }
}
