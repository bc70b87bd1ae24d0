//! Crate-wide error type. Library code never panics on bad input; every
//! fallible operation returns [`Result`].

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape disagreement between related arguments (vector lengths, matrix dims).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Iteration limits, singular systems, NaN/Inf propagation.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Enumeration guards: the request is well formed but too big to honor.
    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed serialized content (CSV fields, model containers).
    #[error("parse error: {0}")]
    Parse(String),
}

/// Shorthand constructors; the enum variants stay the public contract.
impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
