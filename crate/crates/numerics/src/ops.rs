//! Differentiable operations. Each forward checks shapes explicitly and records
//! the data its backward rule needs; there is no broadcasting except the
//! row-bias add and scalar scaling.

use crate::error::{NumericsError, Result};
use crate::kernels::{self, add_into, axpy};
use crate::tape::{SharedMask, Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Backward rule for a user-supplied operation. Returns one gradient buffer
/// per input (ignored for inputs that do not require grad).
pub trait BackwardRule: Send + Sync {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &[f64]) -> Vec<Vec<f64>>;
}

impl<F> BackwardRule for F
where
    F: Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>> + Send + Sync,
{
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &[f64]) -> Vec<Vec<f64>> {
        self(inputs, output, grad_output)
    }
}

pub(crate) enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    ScaledDot { q: Var, k: Var, scale: f64 },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    AddBias { x: Var, bias: Var },
    Gelu { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    Transpose { x: Var },
    FrobeniusSq { x: Var },
    Sum { x: Var },
    ConcatRows { parts: Vec<Var> },
    ConcatCols { parts: Vec<Var> },
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    Softmax { x: Var },
    WeightedCe { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
    Custom { inputs: Vec<Var>, rule: Box<dyn BackwardRule> },
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.requires_grad(v))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2(op)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericsError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(NumericsError::Shape {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, rg, Op::MatMul { a, b }))
    }

    /// `scale · q[m×d] · k[n×d]ᵀ`, the attention score product.
    pub fn scaled_dot(&mut self, q: Var, k: Var, scale: f64) -> Result<Var> {
        let (m, d) = self.dims2(q, "scaled_dot")?;
        let (n, d2) = self.dims2(k, "scaled_dot")?;
        if d != d2 {
            return Err(NumericsError::Shape {
                op: "scaled_dot",
                left: vec![m, d],
                right: vec![n, d2],
            });
        }
        let mut data = vec![0.0; m * n];
        kernels::gemm_nt_acc(self.value(q).data(), self.value(k).data(), &mut data, m, d, n);
        data.iter_mut().for_each(|v| *v *= scale);
        let rg = self.any_grad(&[q, k]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, rg, Op::ScaledDot { q, k, scale }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| v * c).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::Scale { x, c }))
    }

    /// `x[m×n] + 1·biasᵀ` with `bias` of shape `[n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "add_bias")?;
        if self.shape(bias) != [n] {
            return Err(NumericsError::Shape {
                op: "add_bias",
                left: vec![m, n],
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            add_into(b, row);
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, rg, Op::AddBias { x, bias }))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let data = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::Gelu { x }))
    }

    /// Row-wise layer normalization with learned gain and shift of shape `[n]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "layer_norm")?;
        for p in [gamma, beta] {
            if self.shape(p) != [n] {
                return Err(NumericsError::Shape {
                    op: "layer_norm",
                    left: vec![m, n],
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            rg,
            Op::LayerNorm { x, gamma, beta, xhat, rstd },
        ))
    }

    /// Embedding lookup: rows of `table[V×d]` selected by `ids`. Also used to
    /// pick a subset of rows from any 2-d tensor.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2(table, "gather_rows")?;
        if ids.is_empty() {
            return Err(NumericsError::EmptyInput { op: "gather_rows" });
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericsError::Index {
                    op: "gather_rows",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        let rg = self.requires_grad(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], data)?,
            rg,
            Op::Gather { table, ids: ids.to_vec() },
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "transpose")?;
        let data = kernels::transpose(self.value(x).data(), m, n);
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(vec![n, m], data)?, rg, Op::Transpose { x }))
    }

    /// Squared Frobenius norm, as a `[1]` tensor.
    pub fn frobenius_sq(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::scalar(s), rg, Op::FrobeniusSq { x }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::scalar(s), rg, Op::Sum { x }))
    }

    /// Stack 2-d tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumericsError::EmptyInput { op: "concat_rows" })?;
        let (_, n) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, n2) = self.dims2(p, "concat_rows")?;
            if n2 != n {
                return Err(NumericsError::Shape {
                    op: "concat_rows",
                    left: self.shape(first).to_vec(),
                    right: vec![m, n2],
                });
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(vec![rows, n], data)?, rg, Op::ConcatRows { parts: parts.to_vec() }))
    }

    /// Join 2-d tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumericsError::EmptyInput { op: "concat_cols" })?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (m2, n) = self.dims2(p, "concat_cols")?;
            if m2 != m {
                return Err(NumericsError::Shape {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: vec![m2, n],
                });
            }
            widths.push(n);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(vec![m, total], data)?, rg, Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(NumericsError::Index {
                op: "slice_rows",
                index: start + len,
                bound: m,
            });
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(vec![len, n], data)?, rg, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(NumericsError::Index {
                op: "slice_cols",
                index: start + len,
                bound: n,
            });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(vec![m, len], data)?, rg, Op::SliceCols { x, start }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_rows_impl(x, None)
    }

    /// Row softmax restricted to visible entries; hidden entries are exactly 0.
    pub fn softmax_rows_masked(&mut self, x: Var, mask: &SharedMask) -> Result<Var> {
        self.softmax_rows_impl(x, Some(mask))
    }

    fn softmax_rows_impl(&mut self, x: Var, mask: Option<&SharedMask>) -> Result<Var> {
        let (m, n) = self.dims2(x, "softmax_rows")?;
        if let Some(mask) = mask {
            if mask.dims() != (m, n) {
                return Err(NumericsError::Shape {
                    op: "softmax_rows",
                    left: vec![m, n],
                    right: vec![mask.dims().0, mask.dims().1],
                });
            }
        }
        let xs = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let vis = |j: usize| mask.map_or(true, |mk| mk.row(i)[j]);
            let mut max = f64::NEG_INFINITY;
            let mut any = false;
            for (j, &v) in row.iter().enumerate() {
                if !vis(j) {
                    continue;
                }
                if !v.is_finite() {
                    return Err(NumericsError::NumericDomain { op: "softmax_rows" });
                }
                any = true;
                max = max.max(v);
            }
            if !any {
                return Err(NumericsError::EmptyInput { op: "softmax_rows" });
            }
            let o = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if vis(j) {
                    let e = (v - max).exp();
                    o[j] = e;
                    total += e;
                }
            }
            o.iter_mut().for_each(|v| *v /= total);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::Softmax { x }))
    }

    /// `−Σ_t w_t · log softmax(logits_t)[targets_t]` as a `[1]` tensor. Rows
    /// with zero weight contribute exactly nothing to value or gradient.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let (t, v) = self.dims2(logits, "weighted_cross_entropy")?;
        if targets.len() != t || weights.len() != t {
            return Err(NumericsError::Shape {
                op: "weighted_cross_entropy",
                left: vec![t, v],
                right: vec![targets.len(), weights.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= v) {
            return Err(NumericsError::Index {
                op: "weighted_cross_entropy",
                index: bad,
                bound: v,
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(NumericsError::NumericDomain { op: "weighted_cross_entropy" });
        }
        let ls = self.value(logits).data();
        let mut probs = vec![0.0; t * v];
        let mut loss = 0.0;
        for i in 0..t {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            let row = &ls[i * v..(i + 1) * v];
            if row.iter().any(|x| !x.is_finite()) {
                return Err(NumericsError::NumericDomain { op: "weighted_cross_entropy" });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = &mut probs[i * v..(i + 1) * v];
            let mut total = 0.0;
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = (x - max).exp();
                total += *pj;
            }
            p.iter_mut().for_each(|pj| *pj /= total);
            let lse = max + total.ln();
            loss += w * (lse - row[targets[i]]);
        }
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::WeightedCe {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        ))
    }

    /// Record an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, rule: Box<dyn BackwardRule>) -> Var {
        let rg = self.any_grad(inputs);
        self.push(value, rg, Op::Custom { inputs: inputs.to_vec(), rule })
    }

    pub(crate) fn backward_node(&self, id: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[id].tensor.value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.value(*a).dims2("matmul").unwrap();
                let n = out.shape()[1];
                if let Some(da) = self.slot(scratch, *a) {
                    kernels::gemm_nt_acc(g, self.value(*b).data(), da, m, n, k);
                }
                if let Some(db) = self.slot(scratch, *b) {
                    kernels::gemm_tn_acc(self.value(*a).data(), g, db, m, k, n);
                }
            }
            Op::ScaledDot { q, k, scale } => {
                let (m, d) = self.value(*q).dims2("scaled_dot").unwrap();
                let n = out.shape()[1];
                let gs: Vec<f64> = g.iter().map(|v| v * scale).collect();
                if let Some(dq) = self.slot(scratch, *q) {
                    kernels::gemm_acc(&gs, self.value(*k).data(), dq, m, n, d);
                }
                if let Some(dk) = self.slot(scratch, *k) {
                    kernels::gemm_tn_acc(&gs, self.value(*q).data(), dk, m, n, d);
                }
            }
            Op::Add { a, b } => {
                if let Some(da) = self.slot(scratch, *a) {
                    add_into(g, da);
                }
                if let Some(db) = self.slot(scratch, *b) {
                    add_into(g, db);
                }
            }
            Op::Mul { a, b } => {
                if let Some(da) = self.slot(scratch, *a) {
                    for ((d, &gi), &bi) in da.iter_mut().zip(g).zip(self.value(*b).data()) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = self.slot(scratch, *b) {
                    for ((d, &gi), &ai) in db.iter_mut().zip(g).zip(self.value(*a).data()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale { x, c } => {
                if let Some(dx) = self.slot(scratch, *x) {
                    axpy(*c, g, dx);
                }
            }
            Op::AddBias { x, bias } => {
                let n = out.shape()[1];
                if let Some(dx) = self.slot(scratch, *x) {
                    add_into(g, dx);
                }
                if let Some(db) = self.slot(scratch, *bias) {
                    for row in g.chunks(n) {
                        add_into(row, db);
                    }
                }
            }
            Op::Gelu { x } => {
                if let Some(dx) = self.slot(scratch, *x) {
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(self.value(*x).data()) {
                        *d += gi * gelu_grad(xi);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (m, n) = out.dims2("layer_norm").unwrap();
                if let Some(dgamma) = self.slot(scratch, *gamma) {
                    for i in 0..m {
                        for j in 0..n {
                            dgamma[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                }
                if let Some(dbeta) = self.slot(scratch, *beta) {
                    for row in g.chunks(n) {
                        add_into(row, dbeta);
                    }
                }
                if let Some(dx) = self.slot(scratch, *x) {
                    let gam = self.value(*gamma).data();
                    let mut dxhat = vec![0.0; n];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let xr = &xhat[i * n..(i + 1) * n];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..n {
                            dxhat[j] = gr[j] * gam[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xr[j];
                        }
                        mean_d /= n as f64;
                        mean_dx /= n as f64;
                        for j in 0..n {
                            dx[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let d = out.shape()[1];
                if let Some(dt) = self.slot(scratch, *table) {
                    for (t, &id) in ids.iter().enumerate() {
                        add_into(&g[t * d..(t + 1) * d], &mut dt[id * d..(id + 1) * d]);
                    }
                }
            }
            Op::Transpose { x } => {
                let (n, m) = out.dims2("transpose").unwrap();
                if let Some(dx) = self.slot(scratch, *x) {
                    add_into(&kernels::transpose(g, n, m), dx);
                }
            }
            Op::FrobeniusSq { x } => {
                if let Some(dx) = self.slot(scratch, *x) {
                    axpy(2.0 * g[0], self.value(*x).data(), dx);
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = self.slot(scratch, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(dp) = self.slot(scratch, p) {
                        add_into(&g[offset..offset + len], dp);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols { parts } => {
                let (m, total) = out.dims2("concat_cols").unwrap();
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if let Some(dp) = self.slot(scratch, p) {
                        for i in 0..m {
                            add_into(&g[i * total + col..i * total + col + w], &mut dp[i * w..(i + 1) * w]);
                        }
                    }
                    col += w;
                }
            }
            Op::SliceRows { x, start } => {
                let n = out.shape()[1];
                if let Some(dx) = self.slot(scratch, *x) {
                    add_into(g, &mut dx[start * n..start * n + g.len()]);
                }
            }
            Op::SliceCols { x, start } => {
                let (m, len) = out.dims2("slice_cols").unwrap();
                let n = self.value(*x).shape()[1];
                if let Some(dx) = self.slot(scratch, *x) {
                    for i in 0..m {
                        add_into(&g[i * len..(i + 1) * len], &mut dx[i * n + start..i * n + start + len]);
                    }
                }
            }
            Op::Softmax { x } => {
                let (m, n) = out.dims2("softmax_rows").unwrap();
                let y = out.data();
                if let Some(dx) = self.slot(scratch, *x) {
                    for i in 0..m {
                        let yr = &y[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::WeightedCe { logits, targets, weights, probs } => {
                let v = self.value(*logits).shape()[1];
                if let Some(dl) = self.slot(scratch, *logits) {
                    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let scale = g[0] * w;
                        let row = &mut dl[i * v..(i + 1) * v];
                        axpy(scale, &probs[i * v..(i + 1) * v], row);
                        row[y] -= scale;
                    }
                }
            }
            Op::Custom { inputs, rule } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = rule.backward(&values, out, g);
                for (&inp, gi) in inputs.iter().zip(grads) {
                    if let Some(d) = self.slot(scratch, inp) {
                        add_into(&gi, d);
                    }
                }
            }
        }
    }
}
