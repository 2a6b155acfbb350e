use serde::{Deserialize, Serialize};

use crate::autodiff::{Op, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{nhwc, spatial_shape};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero-fill so that stride 1 preserves spatial size. Even kernels put
    /// the extra row/column of padding after the input.
    Same,
    Valid,
}

/// Resolved dimensions of one cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub out_ch: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], k: &[usize], padding: Padding, stride: usize) -> Result<Self> {
        let (n, h, w, in_ch) = nhwc(x)?;
        let &[kh, kw, kc, out_ch] = k else {
            return Err(Error::Shape(format!("kernel must be [kh,kw,in,out], got {k:?}")));
        };
        if kc != in_ch {
            return Err(Error::Shape(format!("kernel depth {kc} does not match input channels {in_ch}")));
        }
        if stride == 0 {
            return Err(Error::Parameter("stride must be positive".into()));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(w);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::Shape(format!("valid {kh}x{kw} kernel larger than {h}x{w} input")));
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
        };
        Ok(Self { n, h, w, in_ch, kh, kw, out_ch, oh, ow, stride, pad_top, pad_left })
    }

    /// Input row/column for an output position and kernel tap, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(pad).filter(|&i| i < limit)
    }
}

/// Contiguous range of kernel columns that land inside the image for output
/// column `ox`, with the first input column it reads.
#[inline]
fn kx_span(g: &ConvGeom, ox: usize) -> (usize, usize, usize) {
    let start = ox * g.stride;
    let kx0 = g.pad_left.saturating_sub(start);
    let kx1 = (g.w + g.pad_left).saturating_sub(start).min(g.kw);
    (kx0, kx1.max(kx0), (start + kx0).saturating_sub(g.pad_left))
}

pub(crate) fn conv2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    // Fixed channel counts let the accumulator live in registers.
    match g.out_ch {
        4 => conv2d_forward_n::<T, 4>(g, x, w, b),
        8 => conv2d_forward_n::<T, 8>(g, x, w, b),
        16 => conv2d_forward_n::<T, 16>(g, x, w, b),
        32 => conv2d_forward_n::<T, 32>(g, x, w, b),
        _ => conv2d_forward_any(g, x, w, b),
    }
}

fn conv2d_forward_n<T: Scalar, const CO: usize>(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let ci = g.in_ch;
    let mut out = vec![T::zero(); g.n * g.oh * g.ow * CO];
    let mut init = [T::zero(); CO];
    if let Some(b) = b {
        init.copy_from_slice(b);
    }
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut acc = init;
                let (kx0, kx1, ix0) = kx_span(g, ox);
                let span = (kx1 - kx0) * ci;
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.pad_top, g.h) else { continue };
                    let x0 = ((n * g.h + iy) * g.w + ix0) * ci;
                    let w0 = (ky * g.kw + kx0) * ci * CO;
                    let xs = &x[x0..x0 + span];
                    let ws = &w[w0..w0 + span * CO];
                    for (&xv, wrow) in xs.iter().zip(ws.chunks_exact(CO)) {
                        let wrow: &[T; CO] = wrow.try_into().expect("chunk of CO");
                        for o in 0..CO {
                            acc[o] += xv * wrow[o];
                        }
                    }
                }
                let o0 = ((n * g.oh + oy) * g.ow + ox) * CO;
                out[o0..o0 + CO].copy_from_slice(&acc);
            }
        }
    }
    out
}

fn conv2d_forward_any<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (ci, co) = (g.in_ch, g.out_ch);
    let mut out = vec![T::zero(); g.n * g.oh * g.ow * co];
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let o0 = ((n * g.oh + oy) * g.ow + ox) * co;
                let acc = &mut out[o0..o0 + co];
                if let Some(b) = b {
                    acc.copy_from_slice(b);
                }
                let (kx0, kx1, ix0) = kx_span(g, ox);
                let span = (kx1 - kx0) * ci;
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.pad_top, g.h) else { continue };
                    // Neighbouring kernel columns read neighbouring pixels, so
                    // the whole row of taps is one contiguous run.
                    let x0 = ((n * g.h + iy) * g.w + ix0) * ci;
                    let w0 = (ky * g.kw + kx0) * ci * co;
                    let xs = &x[x0..x0 + span];
                    let ws = &w[w0..w0 + span * co];
                    for (&xv, wrow) in xs.iter().zip(ws.chunks_exact(co)) {
                        for (a, &wv) in acc.iter_mut().zip(wrow) {
                            *a += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    grad: &[T],
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (ci, co) = (g.in_ch, g.out_ch);
    let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
    let mut dw = need_dw.then(|| vec![T::zero(); w.len()]);
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let o0 = ((n * g.oh + oy) * g.ow + ox) * co;
                let go = &grad[o0..o0 + co];
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.pad_top, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.pad_left, g.w) else { continue };
                        let x0 = ((n * g.h + iy) * g.w + ix) * ci;
                        let w0 = (ky * g.kw + kx) * ci * co;
                        for c in 0..ci {
                            let wr = w0 + c * co..w0 + (c + 1) * co;
                            if let Some(dx) = dx.as_mut() {
                                let s: T = go.iter().zip(&w[wr.clone()]).map(|(&a, &b)| a * b).sum();
                                dx[x0 + c] += s;
                            }
                            if let Some(dw) = dw.as_mut() {
                                let xv = x[x0 + c];
                                for (d, &gv) in dw[wr].iter_mut().zip(go) {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw)
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of `x` (`[h,w,in]` or `[n,h,w,in]`) with kernels
    /// `[kh,kw,in,out]` plus an optional `[out]` bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding, stride: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), padding, stride)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.out_ch] {
                return Err(Error::Shape(format!("bias must be [{}]", geom.out_ch)));
            }
        }
        let data = conv2d_forward(&geom, self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()));
        let shape = spatial_shape(self.shape(x), geom.n, geom.oh, geom.ow, geom.out_ch);
        let value = Tensor::new(shape, data)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, &inputs))
    }

    /// Attention-head logits: a same-padded, stride-1, bias-free convolution
    /// whose `[kh,kw,d,K]` kernel spans the whole channel depth `d`, giving
    /// `K` maps of the input's spatial size.
    pub fn conv3d_heads(&mut self, t: Var, w: Var) -> Result<Var> {
        let (_, _, _, d) = nhwc(self.shape(t))?;
        match self.shape(w) {
            [_, _, kd, _] if *kd == d => self.conv2d(t, w, None, Padding::Same, 1),
            other => Err(Error::Shape(format!("head weights {other:?} must span the feature depth {d}"))),
        }
    }
}

/// Convolution layer with He-normal initialized kernels and an optional
/// zero-initialized bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2dLayer {
    pub kernels: ParamId,
    pub bias: Option<ParamId>,
    pub padding: Padding,
    pub stride: usize,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        padding: Padding,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::build(store, name, kernel, in_ch, out_ch, padding, stride, rng, true)
    }

    /// Bias-free variant, for convolutions followed by batch normalization
    /// (which cancels any per-channel offset).
    #[allow(clippy::too_many_arguments)]
    pub fn new_unbiased<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        padding: Padding,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::build(store, name, kernel, in_ch, out_ch, padding, stride, rng, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        padding: Padding,
        stride: usize,
        rng: &mut SeededRng,
        with_bias: bool,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        if padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0) {
            return Err(Error::Parameter(format!("same padding needs odd kernels, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::Parameter("stride must be positive".into()));
        }
        let std = (2.0 / (kh * kw * in_ch) as f64).sqrt();
        let kernels = store.add(format!("{name}.kernels"), Tensor::randn(&[kh, kw, in_ch, out_ch], rng, std)?);
        let bias = if with_bias { Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch])?)) } else { None };
        Ok(Self { kernels, bias, padding, stride })
    }

    pub fn out_channels<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.kernels).shape()[3]
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.kernels);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv2d(x, w, b, self.padding, self.stride)
    }
}
