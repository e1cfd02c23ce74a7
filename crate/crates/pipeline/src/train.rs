use std::path::{Path, PathBuf};

use rand::Rng;
use vivid_encoder::export_backbone;
use vivid_model::{Example, StepMetrics, TrainState};
use vivid_ums::{sample_fields_with, SamplerConfig, SchemaConfig};

use crate::data::Dataset;
use crate::error::Result;
use crate::targets::{build_example, TargetKind};

pub const CHECKPOINT_FILE: &str = "checkpoint.vivd";
pub const BACKBONE_FILE: &str = "backbone.vivd";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Clamp the field-count range to what the schema can supply, so a small
/// schema is queried in full instead of failing.
pub fn effective_sampler(cfg: &SamplerConfig, schema: &SchemaConfig) -> SamplerConfig {
    let f = schema.len();
    SamplerConfig {
        k_min: cfg.k_min.min(f),
        k_max: cfg.k_max.min(f),
        low_freq_prob: cfg.low_freq_prob,
    }
}

/// Draw a batch (with replacement) and a field query per sample from the
/// run's data stream.
pub fn next_batch(state: &mut TrainState, ds: &Dataset, kind: TargetKind) -> Result<Vec<Example>> {
    let sampler = effective_sampler(&state.cfg.sampler, &ds.schema);
    (0..state.cfg.batch_size)
        .map(|_| {
            let i = state.rng.gen_range(0..ds.samples.len());
            let s = &ds.samples[i];
            let fields = sample_fields_with(&ds.schema, &mut state.rng, &sampler)?;
            build_example(&s.image, &s.record, &fields, kind, &mut state.rng)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub target: TargetKind,
    /// Where checkpoints, the backbone and the metrics log go. Nothing is
    /// written when unset.
    pub out_dir: Option<PathBuf>,
}

fn write_metrics(dir: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let mut text = String::new();
    for m in metrics {
        text.push_str(&serde_json::to_string(m).expect("plain struct"));
        text.push('\n');
    }
    vivid_encoder::container::write_atomic(&dir.join(METRICS_FILE), text.as_bytes())?;
    Ok(())
}

fn write_artifacts(state: &TrainState, dir: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let ck = state.to_container()?;
    ck.write_atomic(&dir.join(CHECKPOINT_FILE))?;
    export_backbone(&ck)?.write_atomic(&dir.join(BACKBONE_FILE))?;
    write_metrics(dir, metrics)
}

/// Run until `state.step == cfg.steps`. If a step fails (e.g. a non-finite
/// loss) the state from before that step is written out and the error
/// returned.
pub fn train(state: &mut TrainState, ds: &Dataset, opts: &TrainOptions) -> Result<Vec<StepMetrics>> {
    if ds.samples.is_empty() {
        return Err(crate::PipelineError::Usage("training dataset is empty".into()));
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut metrics = Vec::new();
    while state.step < state.cfg.steps {
        let batch = next_batch(state, ds, opts.target)?;
        match state.train_step(&batch) {
            Ok(m) => metrics.push(m),
            Err(e) => {
                if let Some(dir) = &opts.out_dir {
                    write_artifacts(state, dir, &metrics)?;
                }
                return Err(e.into());
            }
        }
        let every = state.cfg.checkpoint_every;
        if let Some(dir) = &opts.out_dir {
            if every > 0 && state.step % every == 0 && state.step < state.cfg.steps {
                state.save(&dir.join(format!("checkpoint-{:06}.vivd", state.step)))?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        write_artifacts(state, dir, &metrics)?;
    }
    Ok(metrics)
}

/// Mean of the first and last `window` values.
pub fn smoothed_ends(values: &[f64], window: usize) -> Option<(f64, f64)> {
    if values.is_empty() || window == 0 {
        return None;
    }
    let w = window.min(values.len());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&values[..w]), mean(&values[values.len() - w..])))
}
