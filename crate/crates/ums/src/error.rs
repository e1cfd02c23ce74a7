use thiserror::Error;

use crate::record::FindingState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UmsError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("finding {finding:?}: label {value:?} is not one of 1.0, 0.0, -1.0 or blank")]
    LabelFormat { finding: String, value: String },

    #[error("unknown finding {0:?}")]
    UnknownFinding(String),

    #[error("empty field query")]
    EmptyQuery,

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("non-canonical structure: {0}")]
    Structure(String),

    #[error("finding {finding:?}: invalid state {value}")]
    InvalidState { finding: String, value: String },

    #[error("findings and answerability blocks disagree: {0}")]
    KeyMismatch(String),

    #[error("finding {finding:?}: state {state:?} is inconsistent with answerability {answerable}")]
    Consistency {
        finding: String,
        state: FindingState,
        answerable: bool,
    },

    #[error("token sequence does not match the serialized record: {0}")]
    SpanAlignment(String),

    #[error("cannot sample {requested} fields from a schema of {available}")]
    InsufficientFields { available: usize, requested: usize },

    #[error("token ids do not decode to UTF-8: {0}")]
    Decode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label table: {0}")]
    Table(String),
}

pub type Result<T> = std::result::Result<T, UmsError>;
