//! Canonical byte form of a record and the strict reader that accepts it.
//!
//! Layout, with no insignificant whitespace and keys in schema order:
//!
//! ```text
//! {"findings":{"<name>":{"state":<"present"|"absent"|"uncertain"|null>},...},
//!  "answerability":{"<name>":<true|false>,...}}
//! ```

use std::ops::Range;

use crate::error::{Result, UmsError};
use crate::json::{self, JsonValue};
use crate::record::{FindingEntry, FindingState, SchemaConfig, UmsRecord};

/// Byte range of one finding's `"<name>":{"state":...}` member inside the
/// findings block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FindingSpan {
    pub name: String,
    pub bytes: Range<usize>,
}

/// Serialize `record`, restricted to `fields` when given.
pub fn serialize_canonical(record: &UmsRecord, fields: Option<&[String]>) -> Result<String> {
    Ok(serialize_with_spans(record, fields)?.0)
}

pub(crate) fn serialize_with_spans(
    record: &UmsRecord,
    fields: Option<&[String]>,
) -> Result<(String, Vec<FindingSpan>)> {
    let restricted;
    let rec = match fields {
        Some(f) => {
            restricted = record.restrict(f)?;
            &restricted
        }
        None => record,
    };
    let mut out = String::with_capacity(64 + rec.entries().len() * 48);
    let mut spans = Vec::with_capacity(rec.entries().len());
    out.push_str("{\"findings\":{");
    for (i, e) in rec.entries().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let start = out.len();
        json::write_string(&mut out, &e.name);
        out.push_str(":{\"state\":");
        out.push_str(e.state.json());
        out.push('}');
        spans.push(FindingSpan {
            name: e.name.clone(),
            bytes: start..out.len(),
        });
    }
    out.push_str("},\"answerability\":{");
    for (i, e) in rec.entries().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        json::write_string(&mut out, &e.name);
        out.push(':');
        out.push_str(if e.answerable { "true" } else { "false" });
    }
    out.push_str("}}");
    Ok((out, spans))
}

fn object<'v>(v: &'v JsonValue, what: &str) -> Result<&'v [(String, usize, JsonValue)]> {
    match v {
        JsonValue::Object(m) => Ok(m),
        other => Err(UmsError::Structure(format!("{what} must be an object, found {}", other.kind()))),
    }
}

/// Parse and validate canonical UMS JSON (any JSON whitespace allowed). The
/// returned record has an empty `image_id`.
pub fn parse_validate(text: &str, schema: &SchemaConfig) -> Result<UmsRecord> {
    from_value(&json::parse(text)?, schema)
}

/// Validate an already-parsed JSON value as a UMS record.
pub fn from_value(root: &JsonValue, schema: &SchemaConfig) -> Result<UmsRecord> {
    let top = object(root, "document")?;
    let keys: Vec<&str> = top.iter().map(|(k, _, _)| k.as_str()).collect();
    if keys != ["findings", "answerability"] {
        return Err(UmsError::Structure(format!(
            "top-level keys must be [\"findings\", \"answerability\"], found {keys:?}"
        )));
    }
    let findings = object(&top[0].2, "findings")?;
    let answerability = object(&top[1].2, "answerability")?;
    if findings.is_empty() {
        return Err(UmsError::EmptyQuery);
    }

    let mut states = Vec::with_capacity(findings.len());
    let mut last: Option<usize> = None;
    for (name, _, value) in findings {
        let pos = schema
            .position(name)
            .ok_or_else(|| UmsError::UnknownFinding(name.clone()))?;
        if last.is_some_and(|l| pos <= l) {
            return Err(UmsError::Structure(format!(
                "finding {name:?} repeated or out of schema order"
            )));
        }
        last = Some(pos);
        let body = object(value, "finding value")?;
        let [(key, _, state)] = body else {
            return Err(UmsError::Structure(format!(
                "finding {name:?} must hold exactly one \"state\" member"
            )));
        };
        if key != "state" {
            return Err(UmsError::Structure(format!("finding {name:?} has member {key:?}, expected \"state\"")));
        }
        let state = match state {
            JsonValue::Null => FindingState::Null,
            JsonValue::String(s) => FindingState::from_name(s).ok_or_else(|| UmsError::InvalidState {
                finding: name.clone(),
                value: format!("{s:?}"),
            })?,
            other => {
                return Err(UmsError::InvalidState {
                    finding: name.clone(),
                    value: other.kind().to_string(),
                })
            }
        };
        states.push((name, state));
    }

    let f_keys: Vec<&str> = findings.iter().map(|(k, _, _)| k.as_str()).collect();
    let a_keys: Vec<&str> = answerability.iter().map(|(k, _, _)| k.as_str()).collect();
    if f_keys != a_keys {
        return Err(UmsError::KeyMismatch(format!("findings {f_keys:?} vs answerability {a_keys:?}")));
    }

    let mut entries = Vec::with_capacity(states.len());
    for ((name, state), (_, _, flag)) in states.into_iter().zip(answerability) {
        let JsonValue::Bool(answerable) = *flag else {
            return Err(UmsError::Structure(format!(
                "answerability of {name:?} must be a boolean, found {}",
                flag.kind()
            )));
        };
        entries.push(FindingEntry {
            name: name.clone(),
            state,
            answerable,
        });
    }
    UmsRecord::new(String::new(), entries, schema)
}
