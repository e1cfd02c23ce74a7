use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use vivid_encoder::container::write_atomic;
use vivid_encoder::{export_backbone, Backbone, Container};
use vivid_eval::{linear_probe, ProbeConfig, ProbeResult};
use vivid_model::{loss_gradcheck, Example, Model, RunConfig, TrainState};
use vivid_numerics::GradCheckOptions;
use vivid_pipeline::{
    export_attention, generate_dataset, probe_labels, read_dataset, train, write_dataset, Dataset, SyntheticSpec,
    TargetKind, TrainOptions, BACKBONE_FILE,
};
use vivid_ums::{read_label_csv, supervise, write_jsonl, SchemaConfig};

/// Bad config or arguments. Everything else is a runtime failure.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(msg.to_string()).into()
}

#[derive(Parser)]
#[command(name = "vivid", version, about = "Structured-supervision ViT pretraining at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config for this subcommand (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Label CSV -> UMS JSONL (`labels.jsonl`). --config is the schema.
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Write a synthetic planted-signal dataset. --config is a dataset spec.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train; writes checkpoint, backbone and metrics log. --config is a run config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; a default synthetic set is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_enum, default_value = "ums")]
        target: TargetArg,
    },
    /// Linear probe on an exported backbone. --config is a probe config.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Linear probe on the backbone inside a training checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of the full loss. --config is a run config
    /// (the tiny preset when omitted).
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Central-difference half-width.
        #[arg(long, default_value_t = 3e-3)]
        eps: f64,
    },
    /// Dump per-group attention maps (CSV + PGM) for the first images.
    AttnDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Strip everything but the vision encoder from a checkpoint.
    ExportBackbone {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TargetArg {
    Ums,
    FreeText,
}

impl From<TargetArg> for TargetKind {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Ums => TargetKind::Ums,
            TargetArg::FreeText => TargetKind::FreeText,
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn config_or<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> Result<T> {
    path.map_or_else(|| Ok(default()), read_config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn load_probe_config(common: &Common) -> Result<ProbeConfig> {
    let mut cfg: ProbeConfig = config_or(common.config.as_deref(), ProbeConfig::default)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn load_run_config(common: &Common, default: fn() -> RunConfig) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(config_err)?
        }
        None => default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn probe(backbone: &Backbone, ds: &Dataset, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let images: Vec<_> = ds.samples.iter().map(|s| s.image.clone()).collect();
    Ok(linear_probe(backbone, &images, &probe_labels(ds), ds.schema.names(), cfg)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert { common, input } => {
            let Some(path) = &common.config else {
                return Err(config_err("convert needs --config <schema.json>"));
            };
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let schema = SchemaConfig::from_json(&text).map_err(config_err)?;
            let file = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let records = read_label_csv(file, &schema)?;
            let mut out = Vec::new();
            write_jsonl(&mut out, &records)?;
            fs::create_dir_all(&common.out)?;
            write_atomic(&common.out.join("labels.jsonl"), &out)?;
            eprintln!("converted {} rows", records.len());
        }
        Command::GenData { common } => {
            let mut spec: SyntheticSpec = config_or(common.config.as_deref(), SyntheticSpec::default)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            spec.validate().map_err(config_err)?;
            write_dataset(&generate_dataset(&spec)?, &common.out)?;
        }
        Command::Train {
            common,
            data,
            steps,
            target,
        } => {
            let mut cfg = load_run_config(&common, RunConfig::desk)?;
            if let Some(steps) = steps {
                cfg.steps = steps;
            }
            let ds = match data {
                Some(dir) => read_dataset(&dir)?,
                None => generate_dataset(&SyntheticSpec {
                    seed: cfg.seed,
                    ..SyntheticSpec::default()
                })?,
            };
            let mut state = TrainState::init(cfg)?;
            let opts = TrainOptions {
                target: target.into(),
                out_dir: Some(common.out.clone()),
            };
            let metrics = train(&mut state, &ds, &opts)?;
            if let Some(last) = metrics.last() {
                eprintln!("step {} loss {:.4} (tok {:.4}, ortho {:.4})", last.step, last.loss, last.loss_tok, last.loss_ortho);
            }
        }
        Command::Probe { common, backbone, data } => {
            let cfg = load_probe_config(&common)?;
            let bb = Backbone::load(&backbone)?;
            let result = probe(&bb, &read_dataset(&data)?, &cfg)?;
            fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("probe.json"), &result)?;
            println!("macro-AUC {:.4} macro-F1 {:.4}", result.macro_auc, result.macro_f1);
        }
        Command::Eval {
            common,
            checkpoint,
            data,
        } => {
            let cfg = load_probe_config(&common)?;
            let bb = Backbone::from_container(export_backbone(&Container::read(&checkpoint)?)?)?;
            let result = probe(&bb, &read_dataset(&data)?, &cfg)?;
            fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("eval.json"), &result)?;
            println!("macro-AUC {:.4} macro-F1 {:.4}", result.macro_auc, result.macro_f1);
        }
        Command::Gradcheck { common, tol, eps } => {
            let cfg = load_run_config(&common, RunConfig::tiny)?;
            let model = Model::init(&cfg)?;
            let ds = generate_dataset(&SyntheticSpec {
                num_samples: 1,
                seed: cfg.seed,
                ..SyntheticSpec::default()
            })?;
            let s = &ds.samples[0];
            // one queried field keeps |L|, and with it the roundoff in each
            // difference, small
            let field = [ds.schema.names()[0].clone()];
            let ex = Example::new(s.image.clone(), supervise(&s.record, &field)?);
            let opts = GradCheckOptions {
                eps,
                tol,
                floor: 1e-5,
                max_entries: None,
                seed: cfg.seed,
                five_point: true,
            };
            let report = loss_gradcheck(&model, &ex, cfg.lambda_ortho, &opts)?;
            let params: Vec<_> = report
                .params
                .iter()
                .map(|p| {
                    json!({
                        "name": p.name,
                        "checked": p.checked,
                        "max_rel_err": p.max_rel_err,
                        "max_abs_err": p.max_abs_err,
                        "non_finite": p.non_finite,
                        "passed": p.passed,
                    })
                })
                .collect();
            fs::create_dir_all(&common.out)?;
            write_json(
                &common.out.join("gradcheck.json"),
                &json!({ "tol": report.tol, "max_rel_err": report.max_rel_err(), "passed": report.passed, "params": params }),
            )?;
            println!("gradcheck max rel err {:.3e} (tol {:.0e})", report.max_rel_err(), tol);
            if !report.passed {
                bail!("gradient check failed");
            }
        }
        Command::AttnDump {
            common,
            checkpoint,
            data,
            count,
        } => {
            let ds = read_dataset(&data)?;
            let images: Vec<_> = ds.samples.iter().take(count).map(|s| s.image.clone()).collect();
            let files = export_attention(&Container::read(&checkpoint)?, &images, &common.out)?;
            eprintln!("wrote {} files", files.len());
        }
        Command::ExportBackbone { common, checkpoint } => {
            let bb = export_backbone(&Container::read(&checkpoint)?)?;
            fs::create_dir_all(&common.out)?;
            bb.write_atomic(&common.out.join(BACKBONE_FILE))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("VIVID_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
