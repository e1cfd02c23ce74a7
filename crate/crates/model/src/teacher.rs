use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vivid_numerics::nn::{Bound, LayerNorm, ParamId, ParamSet, TransformerBlock};
use vivid_numerics::{AttentionMask, Tape, Tensor, Var};
use vivid_ums::{PAD, SEP, VOCAB_SIZE};

use crate::error::{ModelError, Result};

pub const TEACHER_PREFIX: &str = "teacher.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub max_positions: usize,
    /// Std of the token and position tables.
    pub embed_std: f64,
    /// Std of every linear weight inside the blocks.
    pub init_std: f64,
    /// Fixed multiplier on the tied output logits.
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 2,
            max_positions: 320,
            // small tables leave the residual stream to the attention
            // outputs, where the visual prefix can steer it; sharper block
            // weights let single visual keys win attention
            embed_std: 0.1,
            init_std: 0.2,
            logit_scale: 4.0,
            seed: 0x7eac4e2,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.vocab_size != VOCAB_SIZE {
            return bad(format!("teacher vocab must be {VOCAB_SIZE}, got {}", self.vocab_size));
        }
        if [self.dim, self.depth, self.heads, self.mlp_ratio, self.max_positions].contains(&0) {
            return bad("teacher sizes must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return bad(format!("teacher heads {} do not divide dim {}", self.heads, self.dim));
        }
        for (name, v) in [
            ("embed_std", self.embed_std),
            ("init_std", self.init_std),
            ("logit_scale", self.logit_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("teacher {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Layout {
    tok: ParamId,
    pos: ParamId,
    blocks: Vec<TransformerBlock>,
    norm: LayerNorm,
}

/// Seeded, frozen decoder. There is deliberately no `params_mut`: once built
/// the weights can only be read, bound without gradients, or serialized.
#[derive(Clone, Debug)]
pub struct TeacherStub {
    cfg: TeacherConfig,
    params: ParamSet,
    layout: Layout,
}

/// Position bookkeeping for one teacher call.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherLayout {
    /// Rows before the first target token: visual, SEP, instruction, SEP.
    pub prefix: usize,
    pub input_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    pub hidden: Vec<bool>,
}

impl TeacherLayout {
    /// `weights` marks target tokens that carry no supervision. Such tokens
    /// are fed as PAD, are invisible to every other row, and do not advance
    /// the position counter, so nothing downstream can tell what (or how
    /// many) bytes they contained.
    pub fn new(num_visual: usize, instruction: &[usize], target: &[usize], weights: Option<&[f64]>) -> Self {
        let prefix = num_visual + 2 + instruction.len();
        let hidden: Vec<bool> = match weights {
            Some(w) => w.iter().map(|&w| w == 0.0).collect(),
            None => vec![false; target.len()],
        };
        let mut input_ids = Vec::with_capacity(prefix - num_visual + target.len());
        input_ids.push(SEP);
        input_ids.extend_from_slice(instruction);
        input_ids.push(SEP);
        let mut position_ids: Vec<usize> = (0..prefix).collect();
        let mut next = prefix;
        for (&t, &h) in target.iter().zip(&hidden) {
            position_ids.push(next);
            if h {
                input_ids.push(PAD);
            } else {
                input_ids.push(t);
                next += 1;
            }
        }
        Self {
            prefix,
            input_ids,
            position_ids,
            hidden,
        }
    }

    pub fn len(&self) -> usize {
        self.position_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position_ids.is_empty()
    }

    /// Prefix rows see the whole prefix; target rows see the prefix, earlier
    /// visible targets, and themselves.
    pub fn mask(&self) -> AttentionMask {
        let p = self.prefix;
        let hidden = &self.hidden;
        AttentionMask::from_fn(self.len(), self.len(), |r, c| {
            if c < p {
                return true;
            }
            if r < p {
                return false;
            }
            c == r || (c < r && !hidden[c - p])
        })
    }
}

impl TeacherStub {
    pub fn new(cfg: TeacherConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::new();
        let d = cfg.dim;
        let tok = params.push("teacher.tok_emb", Tensor::randn(&[cfg.vocab_size, d], cfg.embed_std, &mut rng));
        let pos = params.push("teacher.pos_emb", Tensor::randn(&[cfg.max_positions, d], cfg.embed_std, &mut rng));
        let blocks = (0..cfg.depth)
            .map(|i| {
                TransformerBlock::new(
                    &mut params,
                    &format!("teacher.blocks.{i}"),
                    d,
                    cfg.heads,
                    cfg.mlp_ratio,
                    cfg.init_std,
                    &mut rng,
                )
            })
            .collect();
        let norm = LayerNorm::new(&mut params, "teacher.norm", d);
        Ok(Self {
            cfg,
            params,
            layout: Layout { tok, pos, blocks, norm },
        })
    }

    /// Rebuild from stored tensors; they must match the seeded layout.
    pub fn from_params(cfg: TeacherConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut t = Self::new(cfg)?;
        t.params.assign(tensors)?;
        Ok(t)
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    /// Always binds without gradients.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.params.bind(tape, false)
    }

    /// Teacher-forced next-token logits, one row per target position except
    /// the last: `[(T−1) × vocab]`. `weights` (if given) marks unsupervised
    /// target tokens, see [`TeacherLayout::new`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        visual: Var,
        instruction: &[usize],
        target: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let (nv, width) = tape.value(visual).dims2("teacher_forward")?;
        if width != self.cfg.dim {
            return Err(ModelError::Config(format!(
                "visual tokens have width {width}, teacher expects {}",
                self.cfg.dim
            )));
        }
        if target.len() < 2 {
            return Err(ModelError::Config("target needs at least two tokens".into()));
        }
        if let Some(w) = weights {
            if w.len() != target.len() {
                return Err(ModelError::Config(format!(
                    "{} weights for {} target tokens",
                    w.len(),
                    target.len()
                )));
            }
        }
        if let Some(&bad) = instruction.iter().chain(target).find(|&&t| t >= self.cfg.vocab_size) {
            return Err(ModelError::Config(format!("token id {bad} outside the vocabulary")));
        }
        let layout = TeacherLayout::new(nv, instruction, target, weights);
        if layout.len() > self.cfg.max_positions {
            return Err(ModelError::Length {
                len: layout.len(),
                capacity: self.cfg.max_positions,
            });
        }

        let l = &self.layout;
        let emb = tape.gather_rows(p.var(l.tok), &layout.input_ids)?;
        let mut x = tape.concat_rows(&[visual, emb])?;
        let pos = tape.gather_rows(p.var(l.pos), &layout.position_ids)?;
        x = tape.add(x, pos)?;
        let mask = Arc::new(layout.mask());
        for b in &l.blocks {
            x = b.forward(tape, p, x, Some(&mask))?;
        }
        // the final target row predicts nothing
        let h = tape.slice_rows(x, layout.prefix, target.len() - 1)?;
        let h = l.norm.forward(tape, p, h)?;
        Ok(tape.scaled_dot(h, p.var(l.tok), self.cfg.logit_scale)?)
    }
}
