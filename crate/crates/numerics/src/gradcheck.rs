//! Central finite-difference checking of tape gradients.

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Perturbation half-width.
    pub eps: f64,
    /// Maximum accepted relative error per entry.
    pub tol: f64,
    /// Denominator floor: relative error is `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many entries per parameter, chosen by `seed`.
    pub max_entries: Option<usize>,
    pub seed: u64,
    /// Use the fourth-order stencil `(−f(p+2ε) + 8f(p+ε) − 8f(p−ε) + f(p−2ε)) / 12ε`.
    /// Its truncation error is O(ε⁴), so a larger ε (less roundoff) can be
    /// afforded on losses with a large magnitude.
    pub five_point: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-6,
            floor: 1e-8,
            max_entries: None,
            seed: 0,
            five_point: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_entry: usize,
    /// Entries where the perturbed function was not finite (or failed).
    pub non_finite: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

fn evaluate<F>(f: &F, params: &[(String, Tensor)], grad: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(_, t)| tape.leaf(t.clone(), grad))
        .collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Compare the tape gradient of scalar `f` against central differences
/// `(f(p+eps) − f(p−eps)) / 2eps` for every (or a sampled subset of) entry.
pub fn grad_check<F>(f: F, params: &[(String, Tensor)], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (mut tape, vars, out) = evaluate(&f, params, true)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let numel = tensor.numel();
        let entries: Vec<usize> = match opts.max_entries {
            Some(k) if k < numel => {
                let mut idx = sample(&mut rng, numel, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..numel).collect(),
        };
        let mut check = ParamCheck {
            name: name.clone(),
            checked: entries.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_entry: 0,
            non_finite: 0,
            passed: true,
        };
        for &e in &entries {
            let orig = tensor.data()[e];
            let mut probe = |delta: f64| -> Option<f64> {
                work[pi].1.data_mut()[e] = orig + delta;
                let v = evaluate(&f, &work, false)
                    .ok()
                    .map(|(tape, _, out)| tape.value(out).item());
                work[pi].1.data_mut()[e] = orig;
                v.filter(|x| x.is_finite())
            };
            let h = opts.eps;
            let numeric = if opts.five_point {
                match (probe(2.0 * h), probe(h), probe(-h), probe(-2.0 * h)) {
                    (Some(p2), Some(p1), Some(m1), Some(m2)) => Some((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)),
                    _ => None,
                }
            } else {
                match (probe(h), probe(-h)) {
                    (Some(p1), Some(m1)) => Some((p1 - m1) / (2.0 * h)),
                    _ => None,
                }
            };
            let Some(numeric) = numeric else {
                check.non_finite += 1;
                check.passed = false;
                continue;
            };
            let a = analytic[pi].data()[e];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            if rel > check.max_rel_err || rel.is_nan() {
                check.max_rel_err = rel;
                check.worst_entry = e;
            }
            check.max_abs_err = check.max_abs_err.max(abs);
        }
        check.passed &= check.max_rel_err <= opts.tol;
        checks.push(check);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradCheckReport {
        tol: opts.tol,
        params: checks,
        passed,
    })
}
