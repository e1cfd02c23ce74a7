use thiserror::Error;
use vivid_encoder::EncoderError;
use vivid_eval::EvalError;
use vivid_model::ModelError;
use vivid_spd::SpdError;
use vivid_ums::UmsError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error(transparent)]
    Spd(#[from] SpdError),

    #[error(transparent)]
    Ums(#[from] UmsError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid dataset spec: {0}")]
    Spec(String),

    #[error("dataset file: {0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
