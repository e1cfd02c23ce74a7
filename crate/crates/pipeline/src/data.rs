//! Planted-signal images: one quadrant per finding, brightness set by the
//! finding's state.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vivid_numerics::Tensor;
use vivid_ums::{jsonl_line, read_jsonl, FindingEntry, FindingState, SchemaConfig, UmsRecord};

use crate::error::{PipelineError, Result};

pub const PRESENT_LEVEL: f64 = 0.8;
pub const ABSENT_LEVEL: f64 = 0.1;
/// Decision thresholds on a region mean: below the first is absent, above
/// the second present, in between uncertain.
pub const THRESHOLDS: (f64, f64) = (0.275, 0.625);

pub const DEFAULT_NAMES: [&str; 4] = ["Mass UL", "Mass UR", "Mass LL", "Mass LR"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub num_findings: usize,
    pub image_size: usize,
    pub noise_std: f64,
    pub p_uncertain: f64,
    pub p_null: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_samples: 2000,
            num_findings: 4,
            image_size: 32,
            noise_std: 0.05,
            p_uncertain: 0.1,
            p_null: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Spec(m));
        if !(1..=4).contains(&self.num_findings) {
            return bad(format!("num_findings must be 1..=4 (one quadrant each), got {}", self.num_findings));
        }
        if self.image_size < 2 || self.image_size % 2 != 0 {
            return bad(format!("image_size must be even and >= 2, got {}", self.image_size));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        for (name, p) in [("p_uncertain", self.p_uncertain), ("p_null", self.p_null)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.p_uncertain + self.p_null > 1.0 {
            return bad("p_uncertain + p_null exceeds 1".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> SchemaConfig {
        SchemaConfig::from_names(&DEFAULT_NAMES[..self.num_findings]).expect("static names are valid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub record: UmsRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: SchemaConfig,
    pub samples: Vec<Sample>,
}

/// `(row range, col range)` of finding `f`'s quadrant.
pub fn region(f: usize, size: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let h = size / 2;
    let r0 = (f / 2) * h;
    let c0 = (f % 2) * h;
    (r0..r0 + h, c0..c0 + h)
}

pub fn region_mean(image: &Tensor, f: usize) -> f64 {
    let size = image.shape()[0];
    let (rows, cols) = region(f, size);
    let n = (rows.len() * cols.len()) as f64;
    rows.flat_map(|r| cols.clone().map(move |c| (r, c)))
        .map(|(r, c)| image.at(r, c))
        .sum::<f64>()
        / n
}

/// The threshold rule the generator is built to satisfy.
pub fn classify_region(mean: f64) -> FindingState {
    if mean < THRESHOLDS.0 {
        FindingState::Absent
    } else if mean > THRESHOLDS.1 {
        FindingState::Present
    } else {
        FindingState::Uncertain
    }
}

fn draw_state<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> FindingState {
    let u: f64 = rng.gen();
    if u < spec.p_null {
        FindingState::Null
    } else if u < spec.p_null + spec.p_uncertain {
        FindingState::Uncertain
    } else if rng.gen_bool(0.5) {
        FindingState::Present
    } else {
        FindingState::Absent
    }
}

fn sample(spec: &SyntheticSpec, schema: &SchemaConfig, index: usize) -> Sample {
    // one independent stream per sample: generation order does not matter
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let s = spec.image_size;
    let h = s / 2;
    let mut px = vec![ABSENT_LEVEL; s * s];
    let mut entries = Vec::with_capacity(spec.num_findings);
    for (f, name) in schema.names().iter().enumerate() {
        let state = draw_state(spec, &mut rng);
        let (rows, cols) = region(f, s);
        match state {
            FindingState::Present => {
                for r in rows {
                    px[r * s + cols.start..r * s + cols.end].fill(PRESENT_LEVEL);
                }
            }
            FindingState::Uncertain => {
                // a bright half, split along a random axis
                let vertical = rng.gen_bool(0.5);
                let first = rng.gen_bool(0.5);
                for r in rows.clone() {
                    for c in cols.clone() {
                        let (a, b) = if vertical { (c - cols.start, h) } else { (r - rows.start, h) };
                        if (a < b / 2) == first {
                            px[r * s + c] = PRESENT_LEVEL;
                        }
                    }
                }
            }
            FindingState::Null => {
                for r in rows {
                    for c in cols.clone() {
                        px[r * s + c] = rng.gen();
                    }
                }
            }
            FindingState::Absent => {}
        }
        entries.push(FindingEntry {
            name: name.clone(),
            state,
            answerable: state != FindingState::Null,
        });
    }
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
        for p in &mut px {
            *p = (*p + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    let record = UmsRecord::new(format!("syn-{index:06}"), entries, schema).expect("generated in schema order");
    Sample {
        image: Tensor::new(vec![s, s], px).expect("square image"),
        record,
    }
}

pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema = spec.schema();
    let samples = (0..spec.num_samples)
        .into_par_iter()
        .map(|i| sample(spec, &schema, i))
        .collect();
    Ok(Dataset { schema, samples })
}

/// U-Ones binary labels: present and uncertain are positive, absent is
/// negative, null is excluded.
pub fn probe_labels(ds: &Dataset) -> vivid_eval::Labels {
    ds.samples
        .iter()
        .map(|s| {
            s.record
                .entries()
                .iter()
                .map(|e| match e.state {
                    FindingState::Present | FindingState::Uncertain => Some(true),
                    FindingState::Absent => Some(false),
                    FindingState::Null => None,
                })
                .collect()
        })
        .collect()
}

const IMAGE_MAGIC: &[u8; 4] = b"VIMG";
const IMAGE_VERSION: u32 = 1;

/// `labels.jsonl`, `images.bin` and `schema.json` under `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = String::new();
    for s in &ds.samples {
        labels.push_str(&jsonl_line(&s.record)?);
        labels.push('\n');
    }
    let size = ds.samples.first().map_or(0, |s| s.image.shape()[0]);
    let mut bin = Vec::with_capacity(16 + ds.samples.len() * size * size * 8);
    bin.extend_from_slice(IMAGE_MAGIC);
    bin.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
    bin.extend_from_slice(&(ds.samples.len() as u32).to_le_bytes());
    bin.extend_from_slice(&(size as u32).to_le_bytes());
    for s in &ds.samples {
        for v in s.image.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    let schema = serde_json::to_string_pretty(&ds.schema.to_file()).map_err(|e| PipelineError::Format(e.to_string()))?;
    vivid_encoder::container::write_atomic(&dir.join("schema.json"), schema.as_bytes())?;
    vivid_encoder::container::write_atomic(&dir.join("labels.jsonl"), labels.as_bytes())?;
    vivid_encoder::container::write_atomic(&dir.join("images.bin"), &bin)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let schema = SchemaConfig::from_json(&std::fs::read_to_string(dir.join("schema.json"))?)?;
    let records = read_jsonl(&std::fs::read_to_string(dir.join("labels.jsonl"))?, &schema)?;
    let mut bytes = Vec::new();
    std::fs::File::open(dir.join("images.bin"))?.read_to_end(&mut bytes)?;
    let fmt = |m: &str| PipelineError::Format(format!("images.bin: {m}"));
    if bytes.len() < 16 || &bytes[..4] != IMAGE_MAGIC {
        return Err(fmt("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    if word(4) != IMAGE_VERSION as usize {
        return Err(fmt("unsupported version"));
    }
    let (n, size) = (word(8), word(12));
    if n != records.len() {
        return Err(fmt(&format!("{n} images for {} label lines", records.len())));
    }
    if bytes.len() != 16 + n * size * size * 8 {
        return Err(fmt("truncated or oversized payload"));
    }
    let samples = records
        .into_iter()
        .enumerate()
        .map(|(i, record)| {
            let start = 16 + i * size * size * 8;
            let px = bytes[start..start + size * size * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Ok(Sample {
                image: Tensor::new(vec![size, size], px).map_err(|e| fmt(&e.to_string()))?,
                record,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { schema, samples })
}
