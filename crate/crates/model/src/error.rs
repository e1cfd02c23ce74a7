use thiserror::Error;
use vivid_encoder::EncoderError;
use vivid_numerics::NumericsError;
use vivid_spd::SpdError;
use vivid_ums::UmsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error(transparent)]
    Spd(#[from] SpdError),

    #[error(transparent)]
    Ums(#[from] UmsError),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("sequence of {len} positions exceeds teacher capacity {capacity}")]
    Length { len: usize, capacity: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient in {0}; step rejected")]
    NonFiniteGradient(String),

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
