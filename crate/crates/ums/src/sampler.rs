//! Field subsets for per-image query training, with long-tail oversampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UmsError};
use crate::record::SchemaConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Probability that each draw comes from the low-prevalence pool.
    pub low_freq_prob: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k_min: 4,
            k_max: 6,
            low_freq_prob: 0.6,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(UmsError::InvalidArgument(format!(
                "k range [{}, {}] is empty or starts at 0",
                self.k_min, self.k_max
            )));
        }
        if !(0.0..=1.0).contains(&self.low_freq_prob) {
            return Err(UmsError::InvalidArgument(format!(
                "low_freq_prob {} outside [0, 1]",
                self.low_freq_prob
            )));
        }
        Ok(())
    }
}

/// Split schema positions into (low, high) pools: low holds findings whose
/// prevalence is strictly below the median. Without prevalence everything
/// lands in the high pool.
pub fn frequency_pools(schema: &SchemaConfig) -> (Vec<usize>, Vec<usize>) {
    let Some(prev) = schema.prevalence() else {
        return (Vec::new(), (0..schema.len()).collect());
    };
    let mut sorted = prev.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (0..n).partition(|&i| prev[i] < median)
}

/// Seeded draw; see [`sample_fields_with`].
pub fn sample_fields(schema: &SchemaConfig, seed: u64, cfg: &SamplerConfig) -> Result<Vec<String>> {
    sample_fields_with(schema, &mut ChaCha8Rng::seed_from_u64(seed), cfg)
}

/// Draw k ~ U{k_min..=k_max}, then k findings without replacement. Each draw
/// picks the low-frequency pool with probability `low_freq_prob` (uniform
/// within the pool) and falls back to the other pool once one is empty.
/// The result is returned in schema order.
pub fn sample_fields_with<R: Rng + ?Sized>(
    schema: &SchemaConfig,
    rng: &mut R,
    cfg: &SamplerConfig,
) -> Result<Vec<String>> {
    cfg.validate()?;
    if schema.len() < cfg.k_max {
        return Err(UmsError::InsufficientFields {
            available: schema.len(),
            requested: cfg.k_max,
        });
    }
    let (mut low, mut high) = frequency_pools(schema);
    let k = rng.gen_range(cfg.k_min..=cfg.k_max);
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let want_low = rng.gen_bool(cfg.low_freq_prob);
        let pool = match (want_low, low.is_empty(), high.is_empty()) {
            (true, false, _) | (false, false, true) => &mut low,
            _ => &mut high,
        };
        let idx = rng.gen_range(0..pool.len());
        picked.push(pool.swap_remove(idx));
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| schema.names()[i].clone()).collect())
}
