use thiserror::Error;
use vivid_numerics::NumericsError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("image must be {expected}x{expected}, got shape {got:?}")]
    ImageShape { expected: usize, got: Vec<usize> },

    #[error("pixel {index} is {value}, outside [0, 1]")]
    PixelRange { index: usize, value: f64 },

    #[error("invalid encoder config: {0}")]
    Config(String),

    #[error("container format: {0}")]
    Format(String),

    #[error("deployment contract violated: {0}")]
    Deployment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;
