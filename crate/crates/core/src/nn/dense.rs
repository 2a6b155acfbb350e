use serde::{Deserialize, Serialize};

use crate::autodiff::{Op, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn dense_dims(x: &[usize], w: &[usize]) -> Result<(usize, usize, usize)> {
    let (rows, inp) = match *x {
        [i] => (1, i),
        [n, i] => (n, i),
        _ => return Err(Error::Shape(format!("dense input must be [in] or [n,in], got {x:?}"))),
    };
    match *w {
        [wi, out] if wi == inp => Ok((rows, inp, out)),
        _ => Err(Error::Shape(format!("dense weights {w:?} do not accept {inp} inputs"))),
    }
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (rows, inp, out) = dense_dims(x.shape(), w.shape()).expect("validated in forward");
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    let mut dw = vec![T::zero(); inp * out];
    let mut db = vec![T::zero(); out];
    let mut dx = need_dx.then(|| vec![T::zero(); rows * inp]);
    for r in 0..rows {
        let gr = &gd[r * out..(r + 1) * out];
        for (d, &gv) in db.iter_mut().zip(gr) {
            *d += gv;
        }
        for i in 0..inp {
            let xv = xd[r * inp + i];
            let wrow = &wd[i * out..(i + 1) * out];
            for (d, &gv) in dw[i * out..(i + 1) * out].iter_mut().zip(gr) {
                *d += xv * gv;
            }
            if let Some(dx) = dx.as_mut() {
                dx[r * inp + i] = wrow.iter().zip(gr).map(|(&a, &b)| a * b).sum();
            }
        }
    }
    (dx, dw, db)
}

pub(crate) fn concat_backward<T: Scalar>(g: &[T], ca: usize, cb: usize) -> (Vec<T>, Vec<T>) {
    let c = ca + cb;
    let mut ga = Vec::with_capacity(g.len() / c * ca);
    let mut gb = Vec::with_capacity(g.len() / c * cb);
    for chunk in g.chunks(c) {
        ga.extend_from_slice(&chunk[..ca]);
        gb.extend_from_slice(&chunk[ca..]);
    }
    (ga, gb)
}

impl<T: Scalar> Tape<T> {
    /// `x · w + b` for `x` of shape `[in]` or `[n, in]`, `w` of `[in, out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (rows, inp, out) = dense_dims(self.shape(x), self.shape(w))?;
        if self.shape(b) != [out] {
            return Err(Error::Shape(format!("dense bias must be [{out}]")));
        }
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut y = Vec::with_capacity(rows * out);
        for r in 0..rows {
            let mut acc = bd.to_vec();
            for i in 0..inp {
                let xv = xd[r * inp + i];
                for (a, &wv) in acc.iter_mut().zip(&wd[i * out..(i + 1) * out]) {
                    *a += xv * wv;
                }
            }
            y.extend(acc);
        }
        let shape = if self.value(x).rank() == 1 { vec![out] } else { vec![rows, out] };
        let value = Tensor::new(shape, y)?;
        Ok(self.push(value, Op::Dense { x, w, b }, &[x, w, b]))
    }

    /// Stacks `a` and `b` along the last (channel) axis; all other dims must agree.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let r = sa.len();
        if r != sb.len() || sa[..r - 1] != sb[..r - 1] {
            return Err(Error::Shape(format!("cannot concatenate {sa:?} with {sb:?}")));
        }
        let (ca, cb) = (sa[r - 1], sb[r - 1]);
        let mut shape = sa.to_vec();
        shape[r - 1] = ca + cb;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ad.len() + bd.len());
        for (x, y) in ad.chunks(ca).zip(bd.chunks(cb)) {
            data.extend_from_slice(x);
            data.extend_from_slice(y);
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { a, b }, &[a, b]))
    }
}

/// Fully connected layer, Glorot-normal weights and zero bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: ParamId,
    pub bias: ParamId,
}

impl DenseLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        let weights = store.add(format!("{name}.weights"), Tensor::randn(&[inputs, outputs], rng, std)?);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs])?);
        Ok(Self { weights, bias })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weights);
        let b = tape.param(store, self.bias);
        tape.dense(x, w, b)
    }
}
