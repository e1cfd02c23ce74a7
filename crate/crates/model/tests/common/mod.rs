#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vivid_model::*;
use vivid_numerics::Tensor;
use vivid_ums::{supervise, FindingEntry, FindingState, SchemaConfig, UmsRecord};

pub const NAMES: [&str; 4] = ["Mass UL", "Mass UR", "Mass LL", "Mass LR"];

pub fn schema() -> SchemaConfig {
    SchemaConfig::from_names(&NAMES).unwrap()
}

pub fn record(states: [FindingState; 4]) -> UmsRecord {
    let entries = NAMES
        .iter()
        .zip(states)
        .map(|(n, s)| FindingEntry {
            name: n.to_string(),
            state: s,
            answerable: s != FindingState::Null,
        })
        .collect();
    UmsRecord::new("img", entries, &schema()).unwrap()
}

pub fn fields() -> Vec<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn image(seed: u64) -> Tensor {
    Tensor::uniform(&[32, 32], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn example(states: [FindingState; 4], seed: u64) -> Example {
    Example::new(image(seed), supervise(&record(states), &fields()).unwrap())
}

pub fn tiny_config() -> RunConfig {
    RunConfig::tiny()
}
