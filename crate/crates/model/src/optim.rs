use vivid_numerics::nn::ParamSet;
use vivid_numerics::optim::adamw_update;
use vivid_numerics::Tensor;

use crate::config::OptimConfig;
use crate::error::{ModelError, Result};

/// First and second moments for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn zeros_like(params: &ParamSet) -> Self {
        let z: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self { m: z.clone(), v: z }
    }
}

/// AdamW over two parameter groups (encoder, projector) sharing one step
/// counter. The teacher is never handed to the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub cfg: OptimConfig,
    /// Number of updates applied so far.
    pub t: u64,
    pub vit: AdamState,
    pub spd: AdamState,
}

impl AdamW {
    pub fn new(cfg: OptimConfig, vit: &ParamSet, spd: &ParamSet) -> Self {
        Self {
            cfg,
            t: 0,
            vit: AdamState::zeros_like(vit),
            spd: AdamState::zeros_like(spd),
        }
    }

    /// Apply one update with the given learning rates. All gradients are
    /// checked before anything is touched, so a rejected step leaves
    /// parameters and moments unchanged.
    pub fn step(
        &mut self,
        vit: &mut ParamSet,
        grads_vit: &[Tensor],
        lr_vit: f64,
        spd: &mut ParamSet,
        grads_spd: &[Tensor],
        lr_spd: f64,
    ) -> Result<()> {
        for (params, grads) in [(&*vit, grads_vit), (&*spd, grads_spd)] {
            if grads.len() != params.len() {
                return Err(ModelError::Config(format!(
                    "{} gradients for {} parameters",
                    grads.len(),
                    params.len()
                )));
            }
            for (i, g) in grads.iter().enumerate() {
                if g.shape() != params.tensor(i).shape() {
                    return Err(ModelError::Config(format!("gradient shape mismatch for {}", params.name(i))));
                }
                if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                    return Err(ModelError::NonFiniteGradient(format!(
                        "{}[{pos}] = {}",
                        params.name(i),
                        g.data()[pos]
                    )));
                }
            }
        }
        self.t += 1;
        let t = self.t;
        adamw_group(&self.cfg, t, lr_vit, vit, grads_vit, &mut self.vit);
        adamw_group(&self.cfg, t, lr_spd, spd, grads_spd, &mut self.spd);
        Ok(())
    }
}

fn adamw_group(cfg: &OptimConfig, t: u64, lr: f64, params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState) {
    for (i, g) in grads.iter().enumerate() {
        adamw_update(
            &cfg.hyper(),
            t,
            lr,
            params.tensor_mut(i).data_mut(),
            g.data(),
            state.m[i].data_mut(),
            state.v[i].data_mut(),
        );
    }
}
