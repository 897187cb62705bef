use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
///
/// Precondition violations are always reported, never turned into NaN.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validity error: {0}")]
    Validity(String),
    #[error("degenerate singular spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn validity(msg: impl Into<String>) -> Self {
        Error::Validity(msg.into())
    }
}
