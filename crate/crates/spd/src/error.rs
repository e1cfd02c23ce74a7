use thiserror::Error;
use vivid_numerics::NumericsError;

#[derive(Debug, Error)]
pub enum SpdError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("invalid projector config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SpdError>;
