use std::collections::HashSet;

use indexmap::IndexMap;

use crate::encoder::{parameter_specs, ModelConfig};
use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Real, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-6;

/// Linear warmup to `peak` over `warmup_fraction` of `total` steps, then
/// linear decay to 0 at the last step. Steps count from 1.
pub fn learning_rate(step: usize, total: usize, peak: f64, warmup_fraction: f64) -> f64 {
    let warm = ((warmup_fraction * total as f64).round() as usize).clamp(1, total);
    if step <= warm {
        peak * step as f64 / warm as f64
    } else {
        peak * (total - step.min(total)) as f64 / (total - warm) as f64
    }
}

/// Adaptive-moment optimiser with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    pub weight_decay: f64,
    step: u64,
    first: IndexMap<String, Vec<F>>,
    second: IndexMap<String, Vec<F>>,
    decayed: HashSet<String>,
    frozen: HashSet<String>,
}

impl<F: Real> AdamW<F> {
    /// Decay applies to the tensors listed in `decayed`; `frozen` tensors are
    /// never updated.
    pub fn new(weight_decay: f64, decayed: HashSet<String>, frozen: HashSet<String>) -> Self {
        Self {
            weight_decay,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
            decayed,
            frozen,
        }
    }

    /// Decay set from the parameter registry: weight matrices and embeddings,
    /// not biases, norm parameters or the latent matrix.
    pub fn for_model(config: &ModelConfig, weight_decay: f64, frozen: HashSet<String>) -> Self {
        let decayed = parameter_specs(config)
            .into_iter()
            .filter(|s| s.decay)
            .map(|s| s.name)
            .collect();
        Self::new(weight_decay, decayed, frozen)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Any non-finite gradient aborts before a single parameter
    /// changes, naming the tensor.
    pub fn step(
        &mut self,
        store: &mut ParamStore<F>,
        grads: &IndexMap<String, Tensor<F>>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::Diverged {
                    step: self.step as usize + 1,
                    detail: format!("non-finite gradient for {name}"),
                });
            }
            let p = store
                .get(name)
                .ok_or_else(|| Error::Mismatch(format!("gradient for unknown tensor {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Mismatch(format!(
                    "gradient for {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let (b1, b2) = (F::of(BETA1), F::of(BETA2));
        let (lr_f, eps) = (F::of(lr), F::of(ADAM_EPSILON));
        let (c1, c2) = (F::of(c1), F::of(c2));
        for (name, g) in grads {
            if self.frozen.contains(name) {
                continue;
            }
            let n = g.len();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![F::zero(); n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![F::zero(); n]);
            let decay = if self.decayed.contains(name) {
                F::of(self.weight_decay)
            } else {
                F::zero()
            };
            let p = store.get_mut(name).expect("checked above").data_mut();
            for i in 0..n {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (F::one() - b1) * gi;
                v[i] = b2 * v[i] + (F::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr_f * (m_hat / (v_hat.sqrt() + eps) + decay * p[i]);
            }
        }
        Ok(())
    }
}
