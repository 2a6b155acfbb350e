//! Layer primitives: convolution, pooling, softmax maps, normalization,
//! dropout, dense and channel concatenation.
//!
//! Spatial tensors are channels-last, either `[h, w, c]` for a single sample
//! or `[n, h, w, c]` for a batch. Every op keeps the rank of its input.

mod conv;
mod dense;
mod dropout;
mod norm;
mod pool;
mod softmax;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conv::{Conv2dLayer, Padding};
pub use dense::DenseLayer;
pub use dropout::DropoutLayer;
pub use norm::{BatchNormLayer, BN_EPS, BN_MOMENTUM};

pub(crate) use conv::{conv2d_backward, ConvGeom};
pub(crate) use dense::{concat_backward, dense_backward};
pub(crate) use norm::batchnorm_backward;
pub(crate) use softmax::{softmax_last, softmax_last_backward, softmax_spatial_backward};

/// Whether layers use batch statistics and random masks (train) or the
/// deterministic inference path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// `(n, h, w, c)` of a rank-3 or rank-4 channels-last shape.
pub(crate) fn nhwc(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c)),
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => Err(Error::Shape(format!("expected [h,w,c] or [n,h,w,c], got {shape:?}"))),
    }
}

/// Shape with the same rank as `like` (3 or 4) for the given dims.
pub(crate) fn spatial_shape(like: &[usize], n: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if like.len() == 3 {
        vec![h, w, c]
    } else {
        vec![n, h, w, c]
    }
}
