//! Dense row-major tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Dense row-major array with explicit shape.
///
/// `data.len()` always equals the product of `shape`, and every dimension is
/// at least one. Scalars are represented with shape `[1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// How the right-hand operand of an elementwise op lines up with the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// `b` has the shape of `a` with the last axis collapsed to 1, e.g. a
    /// `[h, w, 1]` map against `[h, w, d]` features. Holds the size of that axis.
    LastAxis(usize),
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("empty shape list".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("zero-sized dimension at axis {pos} in {shape:?}")));
    }
    Ok(())
}

pub(crate) fn broadcast_kind(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    let r = a.len();
    if r == b.len() && r >= 2 && a[..r - 1] == b[..r - 1] && b[r - 1] == 1 {
        return Ok(Broadcast::LastAxis(a[r - 1]));
    }
    Err(Error::Shape(format!("cannot combine shapes {a:?} and {b:?}")))
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} entries, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self { shape: shape.to_vec(), data: vec![value; n] })
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// I.i.d. `Normal(0, stddev²)` entries drawn from `rng`.
    pub fn randn(shape: &[usize], rng: &mut SeededRng, stddev: f64) -> Result<Self> {
        if !(stddev > 0.0) {
            return Err(Error::Parameter(format!("stddev must be positive, got {stddev}")));
        }
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.normal() * stddev)).collect();
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Single entry of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Shape(format!("expected one element, shape is {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    /// Entry at a multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of bounds for axis {i} of size {d}");
            off = off * d + ix;
        }
        self.data[off]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ew_add(&self, b: &Self) -> Result<Self> {
        self.zip_broadcast(b, |x, y| x + y)
    }

    pub fn ew_mul(&self, b: &Self) -> Result<Self> {
        self.zip_broadcast(b, |x, y| x * y)
    }

    fn zip_broadcast(&self, b: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        let data = match broadcast_kind(&self.shape, &b.shape)? {
            Broadcast::Same => self.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::LastAxis(d) => self.data.iter().enumerate().map(|(i, &x)| f(x, b.data[i / d])).collect(),
        };
        Ok(Self { shape: self.shape.clone(), data })
    }

    /// Sum over `axes`. Reduced axes are dropped unless `keep_dims`; reducing
    /// every axis without `keep_dims` yields shape `[1]`.
    pub fn reduce_sum(&self, axes: &[usize], keep_dims: bool) -> Result<Self> {
        let rank = self.rank();
        let mut reduced = vec![false; rank];
        for &ax in axes {
            if ax >= rank {
                return Err(Error::Axis(format!("axis {ax} out of range for rank {rank}")));
            }
            reduced[ax] = true;
        }
        let kept_shape: Vec<usize> = self.shape.iter().zip(&reduced).map(|(&d, &r)| if r { 1 } else { d }).collect();
        let out_len: usize = kept_shape.iter().product();
        let mut out = vec![T::zero(); out_len];
        for_each_reduced_index(&self.shape, &reduced, |src, dst| out[dst] += self.data[src]);
        let shape = if keep_dims {
            kept_shape
        } else {
            let s: Vec<usize> = self.shape.iter().zip(&reduced).filter(|(_, &r)| !r).map(|(&d, _)| d).collect();
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        };
        Ok(Self { shape, data: out })
    }
}

/// Walks every flat index of `shape`, reporting it alongside the flat index
/// in the tensor whose `reduced` axes are collapsed to size one.
pub(crate) fn for_each_reduced_index(shape: &[usize], reduced: &[bool], mut f: impl FnMut(usize, usize)) {
    let rank = shape.len();
    let mut out_strides = vec![0usize; rank];
    let mut acc = 1;
    for ax in (0..rank).rev() {
        if reduced[ax] {
            out_strides[ax] = 0;
        } else {
            out_strides[ax] = acc;
            acc *= shape[ax];
        }
    }
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut dst = 0usize;
    for src in 0..total {
        f(src, dst);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            dst += out_strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            dst -= out_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}
