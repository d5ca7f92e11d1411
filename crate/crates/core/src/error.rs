use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Shapes do not line up (channel mismatch, oversized kernel, bad data length).
    Dimension(String),
    /// A scalar parameter is outside its admissible range.
    Parameter(String),
    /// A box or index falls outside the object it refers to.
    Range(String),
    /// A structural invariant does not hold (non-orthonormal rotation, singular K).
    Validation(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::Range(m) => write!(f, "range error: {m}"),
            Error::Validation(m) => write!(f, "validation error: {m}"),
        }
    }
}

impl core::error::Error for Error {}
