use serde::{Deserialize, Serialize};
use vivid_encoder::VitConfig;
use vivid_numerics::optim::AdamHyper;
use vivid_spd::SpdConfig;
use vivid_ums::SamplerConfig;

use crate::error::{ModelError, Result};
use crate::teacher::TeacherConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub lr_vit: f64,
    pub lr_spd: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_vit: 1e-4,
            lr_spd: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_frac: 0.03,
        }
    }
}

impl OptimConfig {
    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        for (name, lr) in [("lr_vit", self.lr_vit), ("lr_spd", self.lr_spd)] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("optim.{name} must be > 0, got {lr}"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("optim.{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("optim.eps must be > 0, got {}", self.eps));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("optim.weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return bad(format!("optim.warmup_frac must lie in [0, 1), got {}", self.warmup_frac));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub vit: VitConfig,
    pub spd: SpdConfig,
    pub teacher: TeacherConfig,
    pub lambda_ortho: f64,
    pub optim: OptimConfig,
    /// 0 is accepted and means "write the initialization and stop".
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Write a checkpoint every this many steps (0 = only at the end).
    #[serde(default)]
    pub checkpoint_every: u64,
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            vit: VitConfig::default(),
            spd: SpdConfig::default(),
            teacher: TeacherConfig::default(),
            lambda_ortho: 0.01,
            optim: OptimConfig::default(),
            steps: 500,
            batch_size: 8,
            seed: 0,
            sampler: SamplerConfig::default(),
            checkpoint_every: 0,
        }
    }

    /// Small enough to finite-difference every parameter in seconds.
    pub fn tiny() -> Self {
        let mut cfg = Self::desk();
        cfg.vit.dim = 8;
        cfg.vit.heads = 2;
        cfg.vit.mlp_ratio = 2;
        cfg.vit.depth = 1;
        cfg.vit.patch_size = 16;
        cfg.vit.init_std = 0.3;
        cfg.spd.vit_dim = 8;
        cfg.spd.head_dim = 8;
        cfg.spd.num_groups = 2;
        cfg.spd.queries_per_group = 1;
        cfg.spd.teacher_dim = 8;
        cfg.spd.init_std = 0.3;
        cfg.teacher.dim = 8;
        cfg.teacher.heads = 2;
        cfg.teacher.depth = 1;
        cfg.teacher.init_std = 0.35;
        // a soft output keeps third derivatives (and thus central-difference
        // truncation error) small
        cfg.teacher.embed_std = 1.0;
        cfg.teacher.logit_scale = 1.0;
        cfg
    }

    /// Full-scale optimisation settings. Only the widths that the desk
    /// encoder can feed are changed; this preset is for reference, not for
    /// running on a laptop.
    pub fn full() -> Self {
        let mut cfg = Self::desk();
        cfg.optim.lr_vit = 2e-5;
        cfg.optim.lr_spd = 1e-4;
        cfg.batch_size = 32;
        cfg.steps = 10_000;
        cfg.spd.teacher_dim = 1536;
        cfg.teacher.dim = 1536;
        cfg.teacher.heads = 12;
        cfg.teacher.init_std = 1.0 / (1536f64).sqrt();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        self.spd.validate()?;
        self.teacher.validate()?;
        self.optim.validate()?;
        self.sampler.validate()?;
        if self.spd.vit_dim != self.vit.dim {
            return Err(ModelError::Config(format!(
                "spd.vit_dim {} must equal vit.dim {}",
                self.spd.vit_dim, self.vit.dim
            )));
        }
        if self.spd.teacher_dim != self.teacher.dim {
            return Err(ModelError::Config(format!(
                "spd.teacher_dim {} must equal teacher.dim {}",
                self.spd.teacher_dim, self.teacher.dim
            )));
        }
        if !(self.lambda_ortho.is_finite() && self.lambda_ortho >= 0.0) {
            return Err(ModelError::Config(format!(
                "lambda_ortho must be >= 0, got {}",
                self.lambda_ortho
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
