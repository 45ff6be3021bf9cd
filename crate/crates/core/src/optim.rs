//! Global-norm gradient clipping and RMSProp.

use serde::{Deserialize, Serialize};

use crate::autodiff::GradientSet;
use crate::error::{contract, Result};
use crate::tensor::{Scalar, Tensor};

/// Rescales every gradient by `threshold / max(norm, threshold)` where
/// `norm` is the global L2 norm over all tensors. Returns the norm measured
/// before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut GradientSet<T>, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(contract(format!(
            "clip threshold must be positive, got {threshold}"
        )));
    }
    let norm = grads.global_norm();
    if norm > threshold {
        let factor = T::from_f64_lossy(threshold / norm);
        for g in grads.tensors_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
    Ok(norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            decay: 0.99,
            epsilon: 0.1,
        }
    }
}

/// Moving averages of squared gradients, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState<T = f32> {
    pub config: RmsPropConfig,
    accumulators: Vec<Tensor<T>>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(params: &[Tensor<T>], config: RmsPropConfig) -> Self {
        Self {
            config,
            accumulators: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor<T>] {
        &self.accumulators
    }

    /// One update:
    /// `acc <- decay*acc + (1-decay)*g^2`, `p <- p - lr*g/(sqrt(acc)+eps)`.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &GradientSet<T>, lr: f64) -> Result<()> {
        grads.check_congruent(params)?;
        if self.accumulators.len() != params.len()
            || self
                .accumulators
                .iter()
                .zip(params.iter())
                .any(|(a, p)| a.shape() != p.shape())
        {
            return Err(contract("optimizer state does not match the parameters"));
        }
        let decay = T::from_f64_lossy(self.config.decay);
        let keep = T::from_f64_lossy(1.0 - self.config.decay);
        let eps = T::from_f64_lossy(self.config.epsilon);
        let lr = T::from_f64_lossy(lr);
        for ((p, g), acc) in params
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.accumulators.iter_mut())
        {
            for ((pv, &gv), av) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(acc.data_mut().iter_mut())
            {
                *av = decay * *av + keep * gv * gv;
                *pv = *pv - lr * gv / (av.sqrt() + eps);
            }
        }
        Ok(())
    }
}
