use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vivid_encoder::VitEncoder;
use vivid_numerics::nn::Bound;
use vivid_numerics::{grad_check, kernels, GradCheckOptions, GradCheckReport, NumericsError, Tape, Tensor, Var};
use vivid_spd::SpdProjector;
use vivid_ums::{byte_ids, SupervisionSequence};

use crate::config::RunConfig;
use crate::error::{ModelError, Result};
use crate::teacher::TeacherStub;

pub const INSTRUCTION_PREFIX: &str = "Report the state of: ";

/// Byte ids of the query instruction for `fields`.
pub fn instruction_ids(fields: &[String]) -> Vec<usize> {
    byte_ids(&format!("{INSTRUCTION_PREFIX}{}", fields.join(", ")))
}

/// One training sample: an image, its weighted target and the instruction.
#[derive(Clone, Debug)]
pub struct Example {
    pub image: Tensor,
    pub target: SupervisionSequence,
    pub instruction: Vec<usize>,
}

impl Example {
    /// Instruction derived from the target's queried fields.
    pub fn new(image: Tensor, target: SupervisionSequence) -> Self {
        let instruction = instruction_ids(&target.queried_fields);
        Self {
            image,
            target,
            instruction,
        }
    }
}

/// Tape handles of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct LossVars {
    pub loss: Var,
    pub loss_tok: Var,
    pub loss_ortho: Var,
    pub logits: Var,
    pub maps: Vec<Var>,
}

/// Values and parameter gradients for one sample or a whole batch.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub loss_tok: f64,
    pub loss_ortho: f64,
    pub grads_vit: Vec<Tensor>,
    pub grads_spd: Vec<Tensor>,
}

/// Student (encoder + projector) and the frozen teacher.
#[derive(Clone, Debug)]
pub struct Model {
    pub vit: VitEncoder,
    pub spd: SpdProjector,
    pub teacher: TeacherStub,
}

impl Model {
    /// Seeded initialization: encoder then projector from one stream, the
    /// teacher from its own seed.
    pub fn init(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let vit = VitEncoder::new(cfg.vit.clone(), &mut rng)?;
        let spd = SpdProjector::new(cfg.spd.clone(), &mut rng)?;
        let teacher = TeacherStub::new(cfg.teacher.clone())?;
        Ok(Self { vit, spd, teacher })
    }

    /// Record `L = L_tok + λ·L_ortho` for one example on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape,
        pv: &Bound,
        ps: &Bound,
        pt: &Bound,
        ex: &Example,
        lambda: f64,
    ) -> Result<LossVars> {
        let seq = &ex.target;
        if seq.token_ids.len() != seq.weights.len() {
            return Err(ModelError::Config(format!(
                "{} weights for {} target tokens",
                seq.weights.len(),
                seq.token_ids.len()
            )));
        }
        let x = self.vit.forward(tape, pv, &ex.image)?;
        let spd = self.spd.forward(tape, ps, x)?;
        let logits = self
            .teacher
            .forward(tape, pt, spd.projected, &ex.instruction, &seq.token_ids, Some(&seq.weights))?;
        let loss_tok = tape.weighted_cross_entropy(logits, &seq.token_ids[1..], &seq.weights[1..])?;
        let reg = tape.scale(spd.ortho, lambda)?;
        let loss = tape.add(loss_tok, reg)?;
        Ok(LossVars {
            loss,
            loss_tok,
            loss_ortho: spd.ortho,
            logits,
            maps: spd.maps,
        })
    }

    /// Forward and backward for one example.
    pub fn sample(&self, ex: &Example, lambda: f64) -> Result<LossOutput> {
        let mut tape = Tape::new();
        let pv = self.vit.params().bind(&mut tape, true);
        let ps = self.spd.params().bind(&mut tape, true);
        let pt = self.teacher.bind(&mut tape);
        let vars = self.record(&mut tape, &pv, &ps, &pt, ex, lambda)?;
        tape.backward(vars.loss)?;
        Ok(LossOutput {
            loss: tape.value(vars.loss).item(),
            loss_tok: tape.value(vars.loss_tok).item(),
            loss_ortho: tape.value(vars.loss_ortho).item(),
            grads_vit: pv.grads(&tape),
            grads_spd: ps.grads(&tape),
        })
    }

    /// Mean loss and gradients over a batch. Samples run in parallel but are
    /// reduced in batch order, so the result does not depend on the thread
    /// count.
    pub fn batch(&self, batch: &[Example], lambda: f64) -> Result<LossOutput> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let outs: Vec<LossOutput> = batch.par_iter().map(|ex| self.sample(ex, lambda)).collect::<Result<_>>()?;
        let mut it = outs.into_iter();
        let mut acc = it.next().expect("non-empty batch");
        for o in it {
            acc.loss += o.loss;
            acc.loss_tok += o.loss_tok;
            acc.loss_ortho += o.loss_ortho;
            for (a, g) in acc.grads_vit.iter_mut().zip(&o.grads_vit) {
                kernels::add_into(g.data(), a.data_mut());
            }
            for (a, g) in acc.grads_spd.iter_mut().zip(&o.grads_spd) {
                kernels::add_into(g.data(), a.data_mut());
            }
        }
        let inv = 1.0 / batch.len() as f64;
        acc.loss *= inv;
        acc.loss_tok *= inv;
        acc.loss_ortho *= inv;
        for g in acc.grads_vit.iter_mut().chain(acc.grads_spd.iter_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        Ok(acc)
    }

    /// Loss values only (no backward pass).
    pub fn evaluate(&self, ex: &Example, lambda: f64) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new();
        let pv = self.vit.params().bind(&mut tape, false);
        let ps = self.spd.params().bind(&mut tape, false);
        let pt = self.teacher.bind(&mut tape);
        let v = self.record(&mut tape, &pv, &ps, &pt, ex, lambda)?;
        Ok((
            tape.value(v.loss).item(),
            tape.value(v.loss_tok).item(),
            tape.value(v.loss_ortho).item(),
        ))
    }
}

/// Central finite-difference check of `L` against every encoder and
/// projector parameter for one example.
pub fn loss_gradcheck(model: &Model, ex: &Example, lambda: f64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let nv = model.vit.params().len();
    let params: Vec<(String, Tensor)> = model
        .vit
        .params()
        .entries()
        .iter()
        .chain(model.spd.params().entries())
        .cloned()
        .collect();
    let report = grad_check(
        |tape, p| {
            let pv = Bound::from_vars(p[..nv].to_vec());
            let ps = Bound::from_vars(p[nv..].to_vec());
            let pt = model.teacher.bind(tape);
            match model.record(tape, &pv, &ps, &pt, ex, lambda) {
                Ok(v) => Ok(v.loss),
                Err(ModelError::Numerics(e)) => Err(e),
                Err(other) => Err(NumericsError::InvalidTensor(other.to_string())),
            }
        },
        &params,
        opts,
    )?;
    Ok(report)
}
