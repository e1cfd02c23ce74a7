use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vivid_encoder::Backbone;
use vivid_numerics::optim::{adamw_update, lr_factor, AdamHyper};
use vivid_numerics::Tensor;

use crate::error::{EvalError, Result};
use crate::metrics::{macro_auc, macro_f1};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
    pub test_frac: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            lr: 1e-3,
            weight_decay: 0.01,
            warmup_frac: 0.03,
            test_frac: 0.2,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(EvalError::Input(format!("probe lr must be > 0, got {}", self.lr)));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(EvalError::Input(format!("test_frac must lie in (0, 1), got {}", self.test_frac)));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) || !(self.weight_decay >= 0.0) {
            return Err(EvalError::Input("warmup_frac in [0, 1) and weight_decay >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub classes: Vec<String>,
    pub auc: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    /// Held-out positives / negatives per class (answerable samples only).
    pub test_positives: Vec<usize>,
    pub test_negatives: Vec<usize>,
    pub macro_auc: f64,
    pub macro_f1: f64,
    /// Classes left out of a macro mean, with the reason.
    pub skipped: Vec<String>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub steps: u64,
}

/// `[N × C]` labels; `None` = not assessable, excluded from loss and metrics.
pub type Labels = Vec<Vec<Option<bool>>>;

/// CLS embedding of every image, `[N × d]`.
pub fn cls_features(backbone: &Backbone, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| Ok(backbone.encoder.cls_embedding(img)?))
        .collect()
}

/// Seeded 80/20-style split of `0..n` into (train, test).
pub fn split_indices(n: usize, test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_frac).round() as usize;
    let test = idx[..n_test].to_vec();
    (idx[n_test..].to_vec(), test)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Linear layer `[d × C]` + bias over standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub classes: usize,
}

impl LinearProbe {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        (0..self.classes)
            .map(|c| {
                let mut z = self.bias[c];
                for k in 0..d {
                    z += (x[k] - self.mean[k]) * self.scale[k] * self.weight[k * self.classes + c];
                }
                sigmoid(z)
            })
            .collect()
    }

    /// Full-batch AdamW on mean sigmoid cross-entropy over answerable
    /// (sample, class) pairs. Feature standardization uses training rows
    /// only.
    pub fn fit(features: &[&[f64]], labels: &[&[Option<bool>]], cfg: &ProbeConfig) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(EvalError::Input("empty training split".into()));
        }
        let d = features[0].len();
        let c = labels[0].len();
        let mut mean = vec![0.0; d];
        for f in features {
            for k in 0..d {
                mean[k] += f[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for f in features {
            for k in 0..d {
                var[k] += (f[k] - mean[k]).powi(2);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        let xs: Vec<Vec<f64>> = features
            .iter()
            .map(|f| (0..d).map(|k| (f[k] - mean[k]) * scale[k]).collect())
            .collect();
        let count = labels.iter().flat_map(|l| l.iter()).filter(|l| l.is_some()).count();
        if count == 0 {
            return Err(EvalError::Input("no answerable training labels".into()));
        }
        let inv = 1.0 / count as f64;

        let hyper = AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
        };
        let mut w = vec![0.0; d * c];
        let mut b = vec![0.0; c];
        let (mut mw, mut vw) = (vec![0.0; d * c], vec![0.0; d * c]);
        let (mut mb, mut vb) = (vec![0.0; c], vec![0.0; c]);
        let mut gw = vec![0.0; d * c];
        let mut gb = vec![0.0; c];
        for t in 0..cfg.steps {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            for (x, y) in xs.iter().zip(labels) {
                for j in 0..c {
                    let Some(target) = y[j] else { continue };
                    let mut z = b[j];
                    for k in 0..d {
                        z += x[k] * w[k * c + j];
                    }
                    let r = (sigmoid(z) - if target { 1.0 } else { 0.0 }) * inv;
                    gb[j] += r;
                    for k in 0..d {
                        gw[k * c + j] += r * x[k];
                    }
                }
            }
            let lr = cfg.lr * lr_factor(t, cfg.steps, cfg.warmup_frac);
            adamw_update(&hyper, t + 1, lr, &mut w, &gw, &mut mw, &mut vw);
            adamw_update(&hyper, t + 1, lr, &mut b, &gb, &mut mb, &mut vb);
        }
        Ok(Self {
            mean,
            scale,
            weight: w,
            bias: b,
            classes: c,
        })
    }
}

/// Train on a seeded split of precomputed features and report held-out
/// metrics.
pub fn probe_features(features: &[Vec<f64>], labels: &Labels, classes: &[String], cfg: &ProbeConfig) -> Result<ProbeResult> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(EvalError::Input(format!(
            "{} feature rows for {} label rows",
            features.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| l.len() != classes.len()) {
        return Err(EvalError::Input(format!(
            "label row with {} entries for {} classes",
            bad.len(),
            classes.len()
        )));
    }
    let (train, test) = split_indices(features.len(), cfg.test_frac, cfg.seed);
    if test.is_empty() || train.is_empty() {
        return Err(EvalError::Input(format!("{} samples are too few to split", features.len())));
    }
    let tf: Vec<&[f64]> = train.iter().map(|&i| features[i].as_slice()).collect();
    let tl: Vec<&[Option<bool>]> = train.iter().map(|&i| labels[i].as_slice()).collect();
    let probe = LinearProbe::fit(&tf, &tl, cfg)?;

    let scores: Vec<Vec<f64>> = test.iter().map(|&i| probe.scores(&features[i])).collect();
    let per_class: Vec<(Vec<f64>, Vec<bool>)> = (0..classes.len())
        .map(|c| {
            let mut s = Vec::new();
            let mut l = Vec::new();
            for (row, &i) in test.iter().enumerate() {
                if let Some(y) = labels[i][c] {
                    s.push(scores[row][c]);
                    l.push(y);
                }
            }
            (s, l)
        })
        .collect();
    let auc = macro_auc(&per_class);
    let f1 = macro_f1(&per_class, cfg.threshold);
    let mut skipped: Vec<String> = auc
        .skipped
        .iter()
        .map(|&c| format!("{}: AUC needs both classes in the test split", classes[c]))
        .collect();
    skipped.extend(
        f1.skipped
            .iter()
            .map(|&c| format!("{}: F1 needs a positive in the test split", classes[c])),
    );
    Ok(ProbeResult {
        classes: classes.to_vec(),
        test_positives: per_class.iter().map(|(_, l)| l.iter().filter(|&&y| y).count()).collect(),
        test_negatives: per_class.iter().map(|(_, l)| l.iter().filter(|&&y| !y).count()).collect(),
        auc: auc.per_class,
        f1: f1.per_class,
        macro_auc: auc.macro_avg,
        macro_f1: f1.macro_avg,
        skipped,
        train_samples: train.len(),
        test_samples: test.len(),
        steps: cfg.steps,
    })
}

/// Freeze `backbone`, embed every image, and probe.
pub fn linear_probe(
    backbone: &Backbone,
    images: &[Tensor],
    labels: &Labels,
    classes: &[String],
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if images.len() != labels.len() {
        return Err(EvalError::Input(format!("{} images for {} label rows", images.len(), labels.len())));
    }
    let feats = cls_features(backbone, images)?;
    probe_features(&feats, labels, classes, cfg)
}
