use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum VitlError {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Shapes of vectors or matrices do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The data itself is unusable (missing observations, ragged trajectories, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A configuration table or embedding file is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A serialized artifact could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// A factorization or eigen-solve failed or produced an inadmissible result.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VitlError>;

pub(crate) fn invalid(msg: impl Into<String>) -> VitlError {
    VitlError::InvalidArgument(msg.into())
}

pub(crate) fn dim(msg: impl Into<String>) -> VitlError {
    VitlError::Dimension(msg.into())
}
