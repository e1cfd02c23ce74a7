//! Named parameter storage and the transformer building blocks shared by the
//! encoder and the teacher.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{NumericsError, Result};
use crate::tape::{SharedMask, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Replace every tensor from `other`, which must have the same names and
    /// shapes in the same order.
    pub fn assign(&mut self, other: Vec<(String, Tensor)>) -> Result<()> {
        if other.len() != self.entries.len() {
            return Err(NumericsError::InvalidTensor(format!(
                "expected {} tensors, got {}",
                self.entries.len(),
                other.len()
            )));
        }
        for ((name, t), (oname, ot)) in self.entries.iter().zip(&other) {
            if name != oname || t.shape() != ot.shape() {
                return Err(NumericsError::InvalidTensor(format!(
                    "tensor {oname} {:?} does not match {name} {:?}",
                    ot.shape(),
                    t.shape()
                )));
            }
        }
        self.entries = other;
        Ok(())
    }

    /// SHA-256 over names, shapes and value bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.entries {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Record every tensor on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Bound {
        Bound(
            self.entries
                .iter()
                .map(|(_, t)| tape.leaf(t.clone(), requires_grad))
                .collect(),
        )
    }
}

/// Tape variables for a [`ParamSet`], indexable by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    /// Point parameter `index` at another variable, e.g. a perturbed copy
    /// supplied by a gradient checker.
    pub fn replace(&mut self, index: usize, var: Var) {
        self.0[index] = var;
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Accumulated gradients, aligned with the parameter set.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.0.iter().map(|&v| tape.grad(v)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = params.push(format!("{prefix}.weight"), Tensor::randn(&[fan_in, fan_out], std, rng));
        let bias = params.push(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]));
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = tape.matmul(x, p.var(self.weight))?;
        tape.add_bias(h, p.var(self.bias))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, prefix: &str, dim: usize) -> Self {
        let gamma = params.push(format!("{prefix}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = params.push(format!("{prefix}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p.var(self.gamma), p.var(self.beta))
    }
}

/// Two linear layers with GELU between them.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        dims: (usize, usize, usize),
        std: f64,
        rng: &mut R,
    ) -> Self {
        let fc1 = Linear::new(params, &format!("{prefix}.fc1"), dims.0, dims.1, std, rng);
        let fc2 = Linear::new(params, &format!("{prefix}.fc2"), dims.1, dims.2, std, rng);
        Self { fc1, fc2 }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, p, x)?;
        let h = tape.gelu(h)?;
        self.fc2.forward(tape, p, h)
    }
}

/// Multi-head self-attention with an optional visibility mask.
#[derive(Clone, Copy, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub head_dim: usize,
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        heads: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && dim % heads == 0, "heads must divide the width");
        Self {
            q: Linear::new(params, &format!("{prefix}.q"), dim, dim, std, rng),
            k: Linear::new(params, &format!("{prefix}.k"), dim, dim, std, rng),
            v: Linear::new(params, &format!("{prefix}.v"), dim, dim, std, rng),
            out: Linear::new(params, &format!("{prefix}.out"), dim, dim, std, rng),
            heads,
            head_dim: dim / heads,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mask: Option<&SharedMask>) -> Result<Var> {
        let q = self.q.forward(tape, p, x)?;
        let k = self.k.forward(tape, p, x)?;
        let v = self.v.forward(tape, p, x)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * self.head_dim;
            let qh = tape.slice_cols(q, start, self.head_dim)?;
            let kh = tape.slice_cols(k, start, self.head_dim)?;
            let vh = tape.slice_cols(v, start, self.head_dim)?;
            let scores = tape.scaled_dot(qh, kh, scale)?;
            let attn = match mask {
                Some(m) => tape.softmax_rows_masked(scores, m)?,
                None => tape.softmax_rows(scores)?,
            };
            heads.push(tape.matmul(attn, vh)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        self.out.forward(tape, p, merged)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + mlp(ln(x))`.
#[derive(Clone, Copy, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let ln1 = LayerNorm::new(params, &format!("{prefix}.ln1"), dim);
        let attn = SelfAttention::new(params, &format!("{prefix}.attn"), dim, heads, std, rng);
        let ln2 = LayerNorm::new(params, &format!("{prefix}.ln2"), dim);
        let mlp = Mlp::new(params, &format!("{prefix}.mlp"), (dim, dim * mlp_ratio, dim), std, rng);
        Self { ln1, attn, ln2, mlp }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mask: Option<&SharedMask>) -> Result<Var> {
        let h = self.ln1.forward(tape, p, x)?;
        let h = self.attn.forward(tape, p, h, mask)?;
        let x = tape.add(x, h)?;
        let h = self.ln2.forward(tape, p, x)?;
        let h = self.mlp.forward(tape, p, h)?;
        tape.add(x, h)
    }
}
