use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A bond whose deformed length leaves the admissible strain range.
    #[error("strain out of domain on pair ({i}, {j}): |Dv| = {stretch}")]
    StrainDomain { i: usize, j: usize, stretch: f64 },

    #[error("potential is not differentiable: {0}")]
    NonDifferentiable(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
