use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vivid_encoder::{Container, RngState, VitEncoder, VIT_PREFIX};
use vivid_numerics::Tensor;
use vivid_spd::{SpdProjector, SPD_PREFIX};

use crate::config::RunConfig;
use crate::error::{ModelError, Result};
use crate::objective::{Example, LossOutput, Model};
use crate::optim::{AdamState, AdamW};
use vivid_numerics::optim::lr_factor;
use crate::teacher::{TeacherStub, TEACHER_PREFIX};

pub const OPTIM_PREFIX: &str = "optim.";

/// One logged optimisation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub loss_tok: f64,
    pub loss_ortho: f64,
    pub lr_vit: f64,
    pub lr_spd: f64,
}

/// Everything a run needs to continue bit-exactly: config, weights,
/// optimizer moments, the data RNG and the step counter.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: RunConfig,
    pub model: Model,
    pub optim: AdamW,
    /// Drives batch and field sampling.
    pub rng: ChaCha8Rng,
    pub step: u64,
}

impl TrainState {
    pub fn init(cfg: RunConfig) -> Result<Self> {
        let model = Model::init(&cfg)?;
        let optim = AdamW::new(cfg.optim.clone(), model.vit.params(), model.spd.params());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // keep the data stream apart from the one used for initialization
        rng.set_stream(1);
        Ok(Self {
            cfg,
            model,
            optim,
            rng,
            step: 0,
        })
    }

    pub fn lrs(&self, step: u64) -> (f64, f64) {
        let f = lr_factor(step, self.cfg.steps, self.cfg.optim.warmup_frac);
        (self.cfg.optim.lr_vit * f, self.cfg.optim.lr_spd * f)
    }

    /// Forward/backward on `batch` and one optimizer update. A non-finite
    /// loss or gradient leaves the state untouched.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<StepMetrics> {
        let out: LossOutput = self.model.batch(batch, self.cfg.lambda_ortho)?;
        if !out.loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(self.step));
        }
        let (lr_vit, lr_spd) = self.lrs(self.step);
        let Model { vit, spd, .. } = &mut self.model;
        self.optim.step(
            vit.params_mut(),
            &out.grads_vit,
            lr_vit,
            spd.params_mut(),
            &out.grads_spd,
            lr_spd,
        )?;
        let metrics = StepMetrics {
            step: self.step,
            loss: out.loss,
            loss_tok: out.loss_tok,
            loss_ortho: out.loss_ortho,
            lr_vit,
            lr_spd,
        };
        self.step += 1;
        Ok(metrics)
    }

    pub fn to_container(&self) -> Result<Container> {
        let config = serde_json::to_value(&self.cfg).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let m = &self.model;
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        tensors.extend(m.vit.params().entries().iter().cloned());
        tensors.extend(m.spd.params().entries().iter().cloned());
        tensors.extend(m.teacher.params().entries().iter().cloned());
        for (group, params, state) in [
            ("vit", m.vit.params(), &self.optim.vit),
            ("spd", m.spd.params(), &self.optim.spd),
        ] {
            for (i, (name, _)) in params.iter().enumerate() {
                tensors.push((format!("{OPTIM_PREFIX}{group}.m.{name}"), state.m[i].clone()));
                tensors.push((format!("{OPTIM_PREFIX}{group}.v.{name}"), state.v[i].clone()));
            }
        }
        tensors.push((format!("{OPTIM_PREFIX}t"), Tensor::scalar(self.optim.t as f64)));
        Ok(Container {
            backbone: false,
            step: self.step,
            config,
            rng: Some(RngState::capture(&self.rng)),
            tensors,
        })
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.backbone {
            return Err(ModelError::Checkpoint("backbone export is not a training checkpoint".into()));
        }
        let cfg: RunConfig =
            serde_json::from_value(c.config.clone()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        cfg.validate()?;
        let vit = VitEncoder::from_params(cfg.vit.clone(), c.with_prefix(VIT_PREFIX))?;
        let spd = SpdProjector::from_params(cfg.spd.clone(), c.with_prefix(SPD_PREFIX))?;
        let teacher = TeacherStub::from_params(cfg.teacher.clone(), c.with_prefix(TEACHER_PREFIX))?;

        let moments = |group: &str, params: &vivid_numerics::nn::ParamSet| -> Result<AdamState> {
            let mut st = AdamState::zeros_like(params);
            for (i, (name, t)) in params.iter().enumerate() {
                for (kind, slot) in [("m", &mut st.m[i]), ("v", &mut st.v[i])] {
                    let key = format!("{OPTIM_PREFIX}{group}.{kind}.{name}");
                    let stored = c
                        .tensor(&key)
                        .ok_or_else(|| ModelError::Checkpoint(format!("missing {key}")))?;
                    if stored.shape() != t.shape() {
                        return Err(ModelError::Checkpoint(format!("{key} has shape {:?}", stored.shape())));
                    }
                    *slot = stored.clone();
                }
            }
            Ok(st)
        };
        let t = c
            .tensor(&format!("{OPTIM_PREFIX}t"))
            .ok_or_else(|| ModelError::Checkpoint("missing optimizer step".into()))?
            .item();
        if !(t >= 0.0 && t.fract() == 0.0) {
            return Err(ModelError::Checkpoint(format!("bad optimizer step {t}")));
        }
        let optim = AdamW {
            cfg: cfg.optim.clone(),
            t: t as u64,
            vit: moments("vit", vit.params())?,
            spd: moments("spd", spd.params())?,
        };
        let known = vit.params().len() + spd.params().len() + teacher.params().len() + 2 * optim.vit.m.len()
            + 2 * optim.spd.m.len()
            + 1;
        if c.tensors.len() != known {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors stored, expected {known}",
                c.tensors.len()
            )));
        }
        let rng = c
            .rng
            .as_ref()
            .ok_or_else(|| ModelError::Checkpoint("missing rng state".into()))?
            .restore()?;
        Ok(Self {
            cfg,
            model: Model { vit, spd, teacher },
            optim,
            rng,
            step: c.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_container()?.write_atomic(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}
