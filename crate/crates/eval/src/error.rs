use thiserror::Error;
use vivid_encoder::EncoderError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error("invalid probe input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
