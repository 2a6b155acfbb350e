use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{nhwc, spatial_shape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2, flooring odd sizes. Returns the pooled data
/// and, per output entry, the flat input index of the window maximum (first
/// in row-major order on ties).
pub(crate) fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, h, w, c) = nhwc(x.shape())?;
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("max pooling needs at least 2x2, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if best == usize::MAX || xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
    }
    let shape = spatial_shape(x.shape(), n, oh, ow, c);
    Ok((Tensor::new(shape, out)?, argmax))
}

impl<T: Scalar> Tape<T> {
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let (value, argmax) = maxpool_forward(self.value(x))?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }
}
