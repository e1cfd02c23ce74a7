//! Byte-level tokenizer: ids 0..=255 are raw UTF-8 bytes, followed by four
//! special ids.

use crate::error::{Result, UmsError};

pub const BOS: usize = 256;
pub const EOS: usize = 257;
pub const PAD: usize = 258;
pub const SEP: usize = 259;
pub const VOCAB_SIZE: usize = 260;

/// `[BOS, bytes..., EOS]`.
pub fn tokenize(text: &str) -> Vec<usize> {
    let mut ids = Vec::with_capacity(text.len() + 2);
    ids.push(BOS);
    ids.extend(text.bytes().map(usize::from));
    ids.push(EOS);
    ids
}

/// Raw byte ids with no specials, e.g. for instruction text.
pub fn byte_ids(text: &str) -> Vec<usize> {
    text.bytes().map(usize::from).collect()
}

/// Inverse of [`tokenize`]. BOS/EOS/PAD are dropped; SEP and out-of-range ids
/// are rejected since they have no textual form.
pub fn decode(ids: &[usize]) -> Result<String> {
    let mut bytes = Vec::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        match id {
            0..=255 => bytes.push(id as u8),
            BOS | EOS | PAD => {}
            other => return Err(UmsError::Decode(format!("id {other} at position {i} has no byte form"))),
        }
    }
    String::from_utf8(bytes).map_err(|e| UmsError::Decode(e.to_string()))
}
