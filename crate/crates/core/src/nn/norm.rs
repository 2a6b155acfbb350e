use serde::{Deserialize, Serialize};

use crate::autodiff::{Op, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch size of a channels-last tensor: axis 0 for `[n,c]` and `[n,h,w,c]`,
/// one for unbatched `[c]` and `[h,w,c]`.
fn batch_size(shape: &[usize]) -> usize {
    match shape.len() {
        2 | 4 => shape[0],
        _ => 1,
    }
}

pub(crate) fn batchnorm_backward<T: Scalar>(
    g: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch_stats: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let m = g.len() / c;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (i, (&gv, &xh)) in g.iter().zip(xhat).enumerate() {
        dgamma[i % c] += gv * xh;
        dbeta[i % c] += gv;
    }
    let mf = T::of_usize(m);
    let dx = g
        .iter()
        .zip(xhat)
        .enumerate()
        .map(|(i, (&gv, &xh))| {
            let ch = i % c;
            if batch_stats {
                // dxhat = g * gamma, summed terms are dbeta * gamma and dgamma * gamma.
                gamma[ch] * inv_std[ch] / mf * (mf * gv - dbeta[ch] - xh * dgamma[ch])
            } else {
                gv * gamma[ch] * inv_std[ch]
            }
        })
        .collect();
    (dx, dgamma, dbeta)
}

/// Per-channel mean and biased variance over every axis but the last.
fn channel_moments<T: Scalar>(x: &[T], c: usize) -> (Vec<T>, Vec<T>) {
    let m = T::of_usize(x.len() / c);
    let mut mean = vec![T::zero(); c];
    for (i, &v) in x.iter().enumerate() {
        mean[i % c] += v;
    }
    mean.iter_mut().for_each(|s| *s /= m);
    let mut var = vec![T::zero(); c];
    for (i, &v) in x.iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    var.iter_mut().for_each(|s| *s /= m);
    (mean, var)
}

/// Batch normalization over the channel (last) axis.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased estimate into the running variance; infer mode reads running
/// statistics only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BatchNormLayer<T> {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormLayer<T> {
    pub fn new(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one())?);
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels])?);
        Ok(Self {
            gamma,
            beta,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let c = self.channels();
        let shape = tape.shape(x).to_vec();
        if shape.last() != Some(&c) {
            return Err(Error::Shape(format!("batch norm over {c} channels got {shape:?}")));
        }
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                let n = batch_size(&shape);
                if n < 2 {
                    return Err(Error::Contract(format!("train-mode batch norm needs a batch of at least 2, got {n}")));
                }
                let (mean, var) = channel_moments(tape.value(x).data(), c);
                let m = tape.value(x).len() / c;
                let mom = T::of(self.momentum);
                let unbias = T::of_usize(m) / T::of_usize(m - 1);
                for ch in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = mom * *rm + (T::one() - mom) * mean[ch];
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = mom * *rv + (T::one() - mom) * var[ch] * unbias;
                }
                (mean, var, true)
            }
            Mode::Infer => (self.running_mean.data().to_vec(), self.running_var.data().to_vec(), false),
        };
        let eps = T::of(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        let (gd, bd) = (tape.value(gamma).data(), tape.value(beta).data());
        let xd = tape.value(x).data();
        let xhat: Vec<T> = xd.iter().enumerate().map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c]).collect();
        let y: Vec<T> = xhat.iter().enumerate().map(|(i, &h)| gd[i % c] * h + bd[i % c]).collect();
        let value = Tensor::new(shape, y)?;
        Ok(tape.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats }, &[x, gamma, beta]))
    }
}
