use std::ops::Range;

use crate::canonical::serialize_with_spans;
use crate::error::{Result, UmsError};
use crate::record::UmsRecord;
use crate::tokenizer::tokenize;

/// Token range of one queried finding's findings-block member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSpan {
    pub name: String,
    pub tokens: Range<usize>,
    pub answerable: bool,
}

/// A tokenized target with one loss weight per token.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionSequence {
    pub token_ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub spans: Vec<TokenSpan>,
    pub queried_fields: Vec<String>,
}

impl SupervisionSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of tokens carrying weight 0.
    pub fn masked_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 0.0).count()
    }
}

/// Weight every token of `token_ids` (which must be the tokenization of the
/// canonical serialization of `record` restricted to `fields`): 0 inside
/// the member of each unanswerable queried finding, 1 everywhere else.
pub fn answerability_weights(
    record: &UmsRecord,
    fields: &[String],
    token_ids: &[usize],
) -> Result<SupervisionSequence> {
    let (text, byte_spans) = serialize_with_spans(record, Some(fields))?;
    let expected = tokenize(&text);
    if expected.len() != token_ids.len() {
        return Err(UmsError::SpanAlignment(format!(
            "expected {} tokens, got {}",
            expected.len(),
            token_ids.len()
        )));
    }
    if let Some(i) = expected.iter().zip(token_ids).position(|(a, b)| a != b) {
        return Err(UmsError::SpanAlignment(format!(
            "token {i} is {} but the serialization has {}",
            token_ids[i], expected[i]
        )));
    }

    let mut weights = vec![1.0; token_ids.len()];
    let mut spans = Vec::with_capacity(byte_spans.len());
    for span in byte_spans {
        let entry = record.entry(&span.name).expect("restricted serialization only names record entries");
        // +1: BOS shifts every byte by one token
        let tokens = span.bytes.start + 1..span.bytes.end + 1;
        if !entry.answerable {
            weights[tokens.clone()].fill(0.0);
        }
        spans.push(TokenSpan {
            name: span.name,
            tokens,
            answerable: entry.answerable,
        });
    }
    let queried_fields = spans.iter().map(|s| s.name.clone()).collect();
    Ok(SupervisionSequence {
        token_ids: token_ids.to_vec(),
        weights,
        spans,
        queried_fields,
    })
}

/// Serialize, tokenize and weight in one go.
pub fn supervise(record: &UmsRecord, fields: &[String]) -> Result<SupervisionSequence> {
    let text = crate::canonical::serialize_canonical(record, Some(fields))?;
    answerability_weights(record, fields, &tokenize(&text))
}
