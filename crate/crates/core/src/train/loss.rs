//! Softmax scores and categorical cross-entropy.

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::softmax_last;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `e^{s_i} / Σ_j e^{s_j}` along the last axis, max-subtracted.
pub fn softmax_scores<T: Scalar>(scores: &Tensor<T>) -> Result<Tensor<T>> {
    softmax_last(scores)
}

fn rows<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<(usize, usize)> {
    if probs.shape() != targets.shape() || probs.rank() > 2 {
        return Err(Error::Shape(format!(
            "probs {:?} and targets {:?} must share a [C] or [n,C] shape",
            probs.shape(),
            targets.shape()
        )));
    }
    let c = *probs.shape().last().unwrap();
    let n = probs.len() / c;
    for (r, row) in targets.data().chunks(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || ones + zeros != c {
            return Err(Error::Contract(format!("target row {r} is not one-hot")));
        }
    }
    Ok((n, c))
}

/// Mean over the batch of `-Σ_i t_i log p_i` with `p_i` clamped at [`PROB_FLOOR`].
pub fn cce_loss<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    let (n, _) = rows(probs, targets)?;
    let floor = T::of(PROB_FLOOR);
    let total: T = probs
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(_, &t)| t != T::zero())
        .map(|(&p, &t)| -t * p.max(floor).ln())
        .sum();
    Ok(total / T::of_usize(n))
}

pub(crate) fn cce_backward<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>, g: T) -> Vec<T> {
    let c = *probs.shape().last().unwrap();
    let n = T::of_usize(probs.len() / c);
    let floor = T::of(PROB_FLOOR);
    probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &t)| if p > floor { -g * t / (p * n) } else { T::zero() })
        .collect()
}

/// One-hot rows for the given labels.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (r, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!("label {l} outside {classes} classes")));
        }
        data[r * classes + l] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data)
}

impl<T: Scalar> Tape<T> {
    /// Categorical cross-entropy of `probs` against constant one-hot `targets`.
    pub fn cce_loss(&mut self, probs: Var, targets: Tensor<T>) -> Result<Var> {
        let value = cce_loss(self.value(probs), &targets)?;
        Ok(self.push(Tensor::scalar(value), Op::Cce { probs, targets }, &[probs]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn uniform_scores() {
        let p = softmax_scores(&v(&[0.0; 7])).unwrap();
        assert!(p.data().iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn large_scores_stay_finite() {
        let p = softmax_scores(&v(&[1000.0, 0.0])).unwrap();
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
        assert!(p.data()[1] < 1e-300);
    }

    #[test]
    fn log_scores_closed_form() {
        let p = softmax_scores(&v(&[1f64.ln(), 2f64.ln(), 3f64.ln()])).unwrap();
        for (x, e) in p.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_closed_forms() {
        assert_eq!(cce_loss(&v(&[0.0, 1.0, 0.0]), &v(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        let uni = cce_loss(&v(&[1.0 / 7.0; 7]), &one_hot::<f64>(&[3], 7).unwrap().reshape(&[7]).unwrap()).unwrap();
        assert!((uni - 7f64.ln()).abs() < 1e-12);
        assert!((uni - 1.945910).abs() < 1e-6);
        let half = cce_loss(&v(&[0.5, 0.5]), &v(&[1.0, 0.0])).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamp_bounds_loss() {
        let l = cce_loss(&v(&[0.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((l - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn non_one_hot_rejected() {
        assert!(matches!(cce_loss(&v(&[0.5, 0.5]), &v(&[0.5, 0.5])), Err(Error::Contract(_))));
        assert!(matches!(cce_loss(&v(&[0.5, 0.5]), &v(&[1.0, 1.0])), Err(Error::Contract(_))));
    }
}
