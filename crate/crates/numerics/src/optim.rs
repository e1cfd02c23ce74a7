//! Optimizer arithmetic shared by pretraining and probing.

/// Number of linear-warmup steps for a run of `total` steps.
pub fn warmup_steps(total: u64, warmup_frac: f64) -> u64 {
    (warmup_frac * total as f64).ceil() as u64
}

/// Multiplier on the peak learning rate at step `t` of `total`: linear from 0
/// over the warmup, then half a cosine down to 0 at `t = total`.
pub fn lr_factor(t: u64, total: u64, warmup_frac: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let w = warmup_steps(total, warmup_frac).min(total);
    if t < w {
        return t as f64 / w as f64;
    }
    if t >= total {
        return 0.0;
    }
    let progress = (t - w) as f64 / (total - w) as f64;
    0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// One decoupled-weight-decay Adam update of a flat parameter slice; `t` is
/// the 1-based update count used for bias correction.
pub fn adamw_update(h: &AdamHyper, t: u64, lr: f64, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    let c1 = 1.0 - h.beta1.powi(t as i32);
    let c2 = 1.0 - h.beta2.powi(t as i32);
    for k in 0..p.len() {
        m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
        v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        p[k] -= lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * p[k]);
    }
}
