//! Supervision targets: the structured record, or a flat free-text
//! rendering of the same labels used as an ablation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use vivid_model::Example;
use vivid_numerics::Tensor;
use vivid_ums::{supervise, tokenize, FindingState, SupervisionSequence, UmsRecord};

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    #[default]
    Ums,
    FreeText,
}

fn sentence(name: &str, state: FindingState) -> String {
    match state {
        FindingState::Present => format!("{name} is present."),
        FindingState::Absent => format!("No {name}."),
        FindingState::Uncertain => format!("{name} may be present."),
        FindingState::Null => format!("{name} cannot be assessed."),
    }
}

/// One templated sentence per queried finding, in shuffled order, every
/// token weighted 1 — no fixed slots and no answerability masking.
pub fn free_text_target<R: Rng + ?Sized>(record: &UmsRecord, fields: &[String], rng: &mut R) -> Result<SupervisionSequence> {
    let restricted = record.restrict(fields)?;
    let mut sentences: Vec<String> = restricted.findings().map(|(n, s)| sentence(n, s)).collect();
    sentences.shuffle(rng);
    let token_ids = tokenize(&sentences.join(" "));
    Ok(SupervisionSequence {
        weights: vec![1.0; token_ids.len()],
        token_ids,
        spans: Vec::new(),
        queried_fields: restricted.entries().iter().map(|e| e.name.clone()).collect(),
    })
}

pub fn build_example<R: Rng + ?Sized>(
    image: &Tensor,
    record: &UmsRecord,
    fields: &[String],
    kind: TargetKind,
    rng: &mut R,
) -> Result<Example> {
    let target = match kind {
        TargetKind::Ums => supervise(record, fields)?,
        TargetKind::FreeText => free_text_target(record, fields, rng)?,
    };
    Ok(Example::new(image.clone(), target))
}
