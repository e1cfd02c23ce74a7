//! Structured projector: `G` groups of `M` learnable queries cross-attend
//! over encoder tokens through one shared set of Q/K/V projections. The
//! per-group attention maps feed an orthogonality penalty, and the resulting
//! semantic tokens plus a strided subset of patch tokens go through one
//! shared MLP into the teacher's embedding width.

mod error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vivid_numerics::nn::{Bound, Mlp, ParamId, ParamSet};
use vivid_numerics::{kernels, NumericsError, Tape, Tensor, Var};

pub use error::{Result, SpdError};

pub const SPD_PREFIX: &str = "spd.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdConfig {
    pub num_groups: usize,
    pub queries_per_group: usize,
    pub heads: usize,
    pub vit_dim: usize,
    pub head_dim: usize,
    pub teacher_dim: usize,
    /// Keep every `patch_stride`-th patch token (CLS is never selected).
    pub patch_stride: usize,
    pub init_std: f64,
}

impl Default for SpdConfig {
    fn default() -> Self {
        Self {
            num_groups: 4,
            queries_per_group: 2,
            heads: 1,
            vit_dim: 32,
            head_dim: 32,
            teacher_dim: 64,
            patch_stride: 2,
            init_std: 0.02,
        }
    }
}

impl SpdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SpdError::Config(m));
        if [
            self.num_groups,
            self.queries_per_group,
            self.heads,
            self.vit_dim,
            self.head_dim,
            self.teacher_dim,
            self.patch_stride,
        ]
        .contains(&0)
        {
            return bad("all sizes must be positive".into());
        }
        // one MLP serves both semantic tokens (width H·d_h) and patch tokens
        // (width d_v), so the two widths must agree
        if self.attn_width() != self.vit_dim {
            return bad(format!(
                "heads x head_dim = {} must equal vit_dim {} so the projection MLP is shared",
                self.attn_width(),
                self.vit_dim
            ));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        Ok(())
    }

    pub fn attn_width(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn num_queries(&self) -> usize {
        self.num_groups * self.queries_per_group
    }

    /// Indices (into the full token matrix, CLS at 0) of the selected patches.
    pub fn patch_rows(&self, num_tokens: usize) -> Vec<usize> {
        (1..num_tokens).step_by(self.patch_stride).collect()
    }

    /// Rows handed to the teacher: semantic tokens then selected patches.
    pub fn num_projected(&self, num_tokens: usize) -> usize {
        self.num_queries() + self.patch_rows(num_tokens).len()
    }
}

#[derive(Clone, Debug)]
struct Layout {
    queries: Vec<ParamId>,
    w_q: ParamId,
    w_k: ParamId,
    w_v: ParamId,
    mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct SpdProjector {
    cfg: SpdConfig,
    params: ParamSet,
    layout: Layout,
}

/// Tape handles for one forward pass.
#[derive(Clone, Debug)]
pub struct SpdVars {
    /// Per group, `[M × L]`, head-averaged.
    pub maps: Vec<Var>,
    /// Per group, `[M × H·d_h]`.
    pub tokens: Vec<Var>,
    /// `[(G·M + n_sel) × d_t]`.
    pub projected: Var,
    pub ortho: Var,
}

/// Plain-value counterpart of [`SpdVars`].
#[derive(Clone, Debug)]
pub struct SpdOutput {
    pub maps: Vec<Tensor>,
    pub tokens: Vec<Tensor>,
    pub projected: Tensor,
    pub ortho_loss: f64,
}

impl SpdProjector {
    pub fn new<R: Rng + ?Sized>(cfg: SpdConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let std = cfg.init_std;
        let (dv, w) = (cfg.vit_dim, cfg.attn_width());
        let queries = (0..cfg.num_groups)
            .map(|g| params.push(format!("spd.queries.{g}"), Tensor::randn(&[cfg.queries_per_group, dv], std, rng)))
            .collect();
        let w_q = params.push("spd.w_q", Tensor::randn(&[dv, w], std, rng));
        let w_k = params.push("spd.w_k", Tensor::randn(&[dv, w], std, rng));
        let w_v = params.push("spd.w_v", Tensor::randn(&[dv, w], std, rng));
        let mlp = Mlp::new(&mut params, "spd.mlp", (w, cfg.teacher_dim, cfg.teacher_dim), std, rng);
        Ok(Self {
            cfg,
            params,
            layout: Layout {
                queries,
                w_q,
                w_k,
                w_v,
                mlp,
            },
        })
    }

    pub fn from_params(cfg: SpdConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut spd = Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        spd.params.assign(tensors)?;
        Ok(spd)
    }

    pub fn config(&self) -> &SpdConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Per-group maps `A_g = softmax((Q_g W_Q)(X W_K)ᵀ / √d_h)` and tokens
    /// `T_g = A_g (X W_V)`. With several heads the tokens are concatenated
    /// across heads and the reported map is the head mean.
    pub fn attend(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<(Vec<Var>, Vec<Var>)> {
        let (_, dv) = tape.value(x).dims2("spd_attention")?;
        if dv != self.cfg.vit_dim {
            return Err(NumericsError::Shape {
                op: "spd_attention",
                left: tape.shape(x).to_vec(),
                right: vec![self.cfg.vit_dim],
            }
            .into());
        }
        let l = &self.layout;
        let (h, dh) = (self.cfg.heads, self.cfg.head_dim);
        let scale = 1.0 / (dh as f64).sqrt();
        let k = tape.matmul(x, p.var(l.w_k))?;
        let v = tape.matmul(x, p.var(l.w_v))?;
        let (kh, vh): (Vec<Var>, Vec<Var>) = if h == 1 {
            (vec![k], vec![v])
        } else {
            let mut ks = Vec::with_capacity(h);
            let mut vs = Vec::with_capacity(h);
            for i in 0..h {
                ks.push(tape.slice_cols(k, i * dh, dh)?);
                vs.push(tape.slice_cols(v, i * dh, dh)?);
            }
            (ks, vs)
        };

        let mut maps = Vec::with_capacity(self.cfg.num_groups);
        let mut tokens = Vec::with_capacity(self.cfg.num_groups);
        for &qid in &l.queries {
            let q = tape.matmul(p.var(qid), p.var(l.w_q))?;
            let mut head_maps = Vec::with_capacity(h);
            let mut head_out = Vec::with_capacity(h);
            for i in 0..h {
                let qi = if h == 1 { q } else { tape.slice_cols(q, i * dh, dh)? };
                let scores = tape.scaled_dot(qi, kh[i], scale)?;
                let a = tape.softmax_rows(scores)?;
                head_out.push(tape.matmul(a, vh[i])?);
                head_maps.push(a);
            }
            if h == 1 {
                maps.push(head_maps[0]);
                tokens.push(head_out[0]);
            } else {
                let mut acc = head_maps[0];
                for &m in &head_maps[1..] {
                    acc = tape.add(acc, m)?;
                }
                maps.push(tape.scale(acc, 1.0 / h as f64)?);
                tokens.push(tape.concat_cols(&head_out)?);
            }
        }
        Ok((maps, tokens))
    }

    /// Run the shared MLP over `[spd tokens; patch tokens]`.
    pub fn project(&self, tape: &mut Tape, p: &Bound, spd_tokens: &[Var], patch_tokens: Var) -> Result<Var> {
        let mut rows = spd_tokens.to_vec();
        rows.push(patch_tokens);
        let stacked = tape.concat_rows(&rows)?;
        Ok(self.layout.mlp.forward(tape, p, stacked)?)
    }

    /// Full projector: attention, penalty, patch selection and projection.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<SpdVars> {
        let (maps, tokens) = self.attend(tape, p, x)?;
        let ortho = ortho_loss(tape, &maps)?;
        let n = tape.shape(x)[0];
        let rows = self.cfg.patch_rows(n);
        let patches = tape.gather_rows(x, &rows)?;
        let projected = self.project(tape, p, &tokens, patches)?;
        Ok(SpdVars {
            maps,
            tokens,
            projected,
            ortho,
        })
    }

    /// Forward without gradients.
    pub fn run(&self, x: &Tensor) -> Result<SpdOutput> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &p, xv)?;
        Ok(SpdOutput {
            maps: out.maps.iter().map(|&m| tape.value(m).clone()).collect(),
            tokens: out.tokens.iter().map(|&t| tape.value(t).clone()).collect(),
            projected: tape.value(out.projected).clone(),
            ortho_loss: tape.value(out.ortho).item(),
        })
    }
}

/// `Σ_{g≠g'} ‖A_g A_{g'}ᵀ‖²_F` over ordered pairs (twice the unordered sum).
pub fn ortho_loss(tape: &mut Tape, maps: &[Var]) -> Result<Var> {
    let Some(&first) = maps.first() else {
        return Err(NumericsError::EmptyInput { op: "ortho_loss" }.into());
    };
    for &m in maps {
        if tape.shape(m) != tape.shape(first) {
            return Err(NumericsError::Shape {
                op: "ortho_loss",
                left: tape.shape(first).to_vec(),
                right: tape.shape(m).to_vec(),
            }
            .into());
        }
    }
    let mut total: Option<Var> = None;
    for (g, &a) in maps.iter().enumerate() {
        for (h, &b) in maps.iter().enumerate() {
            if g == h {
                continue;
            }
            let prod = tape.scaled_dot(a, b, 1.0)?;
            let sq = tape.frobenius_sq(prod)?;
            total = Some(match total {
                None => sq,
                Some(t) => tape.add(t, sq)?,
            });
        }
    }
    Ok(match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    })
}

/// Value-only [`ortho_loss`], used as the map-overlap metric.
pub fn pairwise_overlap(maps: &[Tensor]) -> f64 {
    let mut total = 0.0;
    for (g, a) in maps.iter().enumerate() {
        for (h, b) in maps.iter().enumerate() {
            if g == h {
                continue;
            }
            let (m, l) = (a.shape()[0], a.shape()[1]);
            let mut prod = vec![0.0; m * b.shape()[0]];
            kernels::gemm_nt_acc(a.data(), b.data(), &mut prod, m, l, b.shape()[0]);
            total += prod.iter().map(|v| v * v).sum::<f64>();
        }
    }
    total
}
