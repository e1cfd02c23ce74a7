//! Structured finding records: build them from labels, write and strictly
//! read their canonical JSON form, turn that form into weighted byte-level
//! training targets, and pick the per-image field subsets.

pub mod canonical;
pub mod error;
pub mod io;
pub mod json;
pub mod record;
pub mod sampler;
pub mod tokenizer;
pub mod weights;

pub use io::{jsonl_line, read_jsonl, read_label_csv, write_jsonl};
pub use canonical::{from_value, parse_validate, serialize_canonical, FindingSpan};
pub use error::{Result, UmsError};
pub use record::{build_record, FindingEntry, FindingState, RawLabel, SchemaConfig, SchemaFile, UmsRecord};
pub use sampler::{frequency_pools, sample_fields, sample_fields_with, SamplerConfig};
pub use tokenizer::{byte_ids, decode, tokenize, BOS, EOS, PAD, SEP, VOCAB_SIZE};
pub use weights::{answerability_weights, supervise, SupervisionSequence, TokenSpan};
