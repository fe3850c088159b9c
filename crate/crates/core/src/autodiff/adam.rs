//! Adam with bias-corrected first and second moments.

use alloc::format;
use alloc::vec::Vec;

// f64::powi is an std inherent method; no_std builds get it from the trait.
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use super::AutodiffError;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment buffers plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments matching the given parameter shapes.
    pub fn new(params: &[&Tensor<T>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update over the whole parameter list. The step counter advances
/// once per call, not per tensor. Non-finite gradients abort with the
/// offending parameter index before any tensor is modified.
pub fn adam_step<T: Scalar>(
    cfg: &AdamConfig,
    state: &mut AdamState<T>,
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
) -> Result<(), AutodiffError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(AutodiffError::Rank {
            expected: "one gradient per optimizer parameter",
            got: alloc::vec![params.len(), grads.len(), state.m.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        p.same_shape(g)?;
        if !g.all_finite() {
            return Err(AutodiffError::NonFinite {
                context: format!("gradient for parameter {i}"),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_m_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = T::from_f64(1.0 - cfg.beta2);
    let corr1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let corr2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(&mut state.v))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            md[i] = b1 * md[i] + one_m_b1 * gd[i];
            vd[i] = b2 * vd[i] + one_m_b2 * gd[i] * gd[i];
            let m_hat = md[i] / corr1;
            let v_hat = vd[i] / corr2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
