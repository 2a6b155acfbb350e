use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::nhwc;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_finite<T: Scalar>(x: &Tensor<T>) -> Result<()> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in softmax input".into()));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite softmax input".into()));
    }
    Ok(())
}

/// Max-subtracted softmax over `len` entries spaced `stride` apart from `start`.
fn softmax_strided<T: Scalar>(x: &[T], out: &mut [T], start: usize, len: usize, stride: usize) {
    let idx = |i: usize| start + i * stride;
    let m = (0..len).map(|i| x[idx(i)]).fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for i in 0..len {
        let e = (x[idx(i)] - m).exp();
        out[idx(i)] = e;
        z += e;
    }
    for i in 0..len {
        out[idx(i)] /= z;
    }
}

/// `dx = y * (g - <g, y>)` over the same strided groups.
fn softmax_strided_backward<T: Scalar>(y: &[T], g: &[T], dx: &mut [T], start: usize, len: usize, stride: usize) {
    let idx = |i: usize| start + i * stride;
    let dot: T = (0..len).map(|i| y[idx(i)] * g[idx(i)]).sum();
    for i in 0..len {
        dx[idx(i)] = y[idx(i)] * (g[idx(i)] - dot);
    }
}

/// Per head (last axis), softmax over all spatial positions.
pub(crate) fn softmax_spatial<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, k) = nhwc(x.shape())?;
    check_finite(x)?;
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for head in 0..k {
            softmax_strided(x.data(), &mut out, b * h * w * k + head, h * w, k);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn softmax_spatial_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Vec<T> {
    let (n, h, w, k) = nhwc(y.shape()).expect("validated in forward");
    let mut dx = vec![T::zero(); y.len()];
    for b in 0..n {
        for head in 0..k {
            softmax_strided_backward(y.data(), g.data(), &mut dx, b * h * w * k + head, h * w, k);
        }
    }
    dx
}

/// Softmax along the last axis of a `[C]` or `[n, C]` tensor.
pub(crate) fn softmax_last<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() > 2 {
        return Err(Error::Shape(format!("expected [C] or [n,C], got {:?}", x.shape())));
    }
    check_finite(x)?;
    let c = *x.shape().last().unwrap();
    let mut out = vec![T::zero(); x.len()];
    for row in 0..x.len() / c {
        softmax_strided(x.data(), &mut out, row * c, c, 1);
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn softmax_last_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Vec<T> {
    let c = *y.shape().last().unwrap();
    let mut dx = vec![T::zero(); y.len()];
    for row in 0..y.len() / c {
        softmax_strided_backward(y.data(), g.data(), &mut dx, row * c, c, 1);
    }
    dx
}

impl<T: Scalar> Tape<T> {
    /// Each of the `K` logit maps in `[h,w,K]` (or `[n,h,w,K]`) normalized to
    /// a distribution over the `h*w` positions.
    pub fn softmax_spatial(&mut self, x: Var) -> Result<Var> {
        let value = softmax_spatial(self.value(x))?;
        Ok(self.push(value, Op::SoftmaxSpatial { x }, &[x]))
    }

    /// Class probabilities from scores along the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let value = softmax_last(self.value(x))?;
        Ok(self.push(value, Op::SoftmaxLast { x }, &[x]))
    }
}
