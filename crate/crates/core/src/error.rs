use thiserror::Error;

/// Errors raised by the simulation engine.
///
/// The variants fall into three families that the command line maps onto
/// distinct exit codes: bad input, model-domain violations and search-space
/// caps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model domain error: {0}")]
    ModelDomain(String),

    #[error("search space of {space} exceeds the cap of {cap}")]
    CapExceeded { space: u128, cap: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
