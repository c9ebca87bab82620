use thiserror::Error;

/// Errors produced anywhere in the estimation chain.
#[derive(Debug, Error)]
pub enum DoaError {
    /// A value violates the documented preconditions of an operation.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A file or spec could not be parsed into a valid configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Non-finite values, a degenerate ratio or a failed iteration.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A state that the algorithm guarantees cannot happen.
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DoaError> = std::result::Result<T, E>;

macro_rules! ensure_param {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err($crate::error::DoaError::Parameter(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure_param;
