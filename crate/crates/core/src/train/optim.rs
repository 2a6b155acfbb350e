use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    /// Learning rate 0.01 and epsilon 0.1; the large epsilon damps steps for
    /// parameters with small second moments.
    fn default() -> Self {
        Self { lr: 0.01, eps: 0.1, beta1: 0.9, beta2: 0.999 }
    }
}

/// Adam moments for every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn first_moment(&self, i: usize) -> Option<&Tensor<T>> {
        self.first.get(i)
    }
}

/// One bias-corrected Adam update of every trainable parameter, followed by
/// zeroing all gradients.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, state: &mut AdamState<T>) -> Result<()> {
    if params.num_trainable() == 0 {
        return Err(Error::Contract("adam step on a store without trainable parameters".into()));
    }
    if state.first.is_empty() {
        for (_, p) in params.iter() {
            state.first.push(Tensor::zeros(p.value.shape())?);
            state.second.push(Tensor::zeros(p.value.shape())?);
        }
    } else if state.first.len() != params.len() {
        return Err(Error::Shape("adam state was built for a different parameter set".into()));
    }
    state.step += 1;
    let AdamConfig { lr, eps, beta1, beta2 } = state.config;
    let t = state.step as i32;
    let c1 = T::of(1.0 - beta1.powi(t));
    let c2 = T::of(1.0 - beta2.powi(t));
    let (b1, b2, lr, eps) = (T::of(beta1), T::of(beta2), T::of(lr), T::of(eps));
    for (i, (_, p)) in params.iter_mut().enumerate() {
        if p.trainable {
            let m = state.first[i].data_mut();
            let v = state.second[i].data_mut();
            for (j, (w, &g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * g;
                v[j] = b2 * v[j] + (T::one() - b2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        p.zero_grad();
    }
    Ok(())
}
