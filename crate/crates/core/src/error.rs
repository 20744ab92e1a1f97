use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),
    /// A factorization or variance computation broke down numerically.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// An operation was invoked on a value in the wrong state.
    #[error("invalid state: {0}")]
    State(String),
    /// A synthetic MDP could not be constructed with the requested parameters.
    #[error("construction failed: {0}")]
    Construction(String),
    /// The kernel has no eigendecay profile.
    #[error("unsupported eigendecay profile: {0}")]
    UnsupportedProfile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
