//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric kernels.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use softattn::data::PatchLocation;
use softattn::{upsample_alpha, SeededRng, Tensor64};

/// `[n, h, w, c]` accessor over a flat NHWC buffer.
pub fn at4(data: &[f64], shape: [usize; 4], n: usize, y: usize, x: usize, c: usize) -> f64 {
    data[((n * shape[1] + y) * shape[2] + x) * shape[3] + c]
}

/// Leading padding of a TensorFlow-style "same" convolution.
pub fn same_pad(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Plain nested-loop cross-correlation. `x` is `[n,h,w,ci]`, `w` is
/// `[kh,kw,ci,co]`; `same` selects zero "same" padding, otherwise valid.
pub fn conv_ref(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    bias: Option<&[f64]>,
    same: bool,
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, h, wd, ci] = xs;
    let [kh, kw, _, co] = ws;
    let ((oh, pt), (ow, pl)) = if same {
        (same_pad(h, kh, stride), same_pad(wd, kw, stride))
    } else {
        (((h - kh) / stride + 1, 0), ((wd - kw) / stride + 1, 0))
    };
    let mut out = vec![0.0; n * oh * ow * co];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..co {
                    let mut acc = bias.map_or(0.0, |bv| bv[o]);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let xv = at4(x, xs, b, iy as usize, ix as usize, c);
                                acc += xv * w[((ky * kw + kx) * ci + c) * co + o];
                            }
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * co + o] = acc;
                }
            }
        }
    }
    (out, [n, oh, ow, co])
}

/// 2x2 stride-2 max pooling with floored output size.
pub fn maxpool_ref(x: &[f64], xs: [usize; 4]) -> (Vec<f64>, [usize; 4]) {
    let [n, h, w, c] = xs;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(at4(x, xs, b, 2 * oy + dy, 2 * ox + dx, ch));
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    (out, [n, oh, ow, c])
}

/// Softmax over the spatial positions of each channel of a `[h,w,c]` map.
pub fn softmax_spatial_ref(x: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let idx: Vec<usize> = (0..h * w).map(|p| p * c + ch).collect();
        let m = idx.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = idx.iter().map(|&i| (x[i] - m).exp()).sum();
        for &i in &idx {
            out[i] = (x[i] - m).exp() / z;
        }
    }
    out
}

/// Step-by-step attention block on one `[h,w,d]` sample: head logits by a
/// plain convolution, explicit softmax, explicit sum, explicit scale.
/// Returns `(f_sa, alpha [h*w], head_maps)`.
pub fn sa_forward_ref(
    t: &[f64],
    h: usize,
    w: usize,
    d: usize,
    heads: &[f64],
    kh: usize,
    kw: usize,
    k: usize,
    gamma: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (logits, _) = conv_ref(t, [1, h, w, d], heads, [kh, kw, d, k], None, true, 1);
    let maps = softmax_spatial_ref(&logits, h, w, k);
    let alpha: Vec<f64> = (0..h * w).map(|p| (0..k).map(|j| maps[p * k + j]).sum()).collect();
    let mut f = vec![0.0; t.len()];
    for p in 0..h * w {
        for ch in 0..d {
            f[p * d + ch] = gamma * t[p * d + ch] * alpha[p];
        }
    }
    (f, alpha, maps)
}

/// relu(concat(maxpool(main), maxpool(f_sa))) for one sample, infer mode.
pub fn sa_integrate_ref(main: &[f64], dm: usize, f_sa: &[f64], d: usize, h: usize, w: usize) -> Vec<f64> {
    let (pm, _) = maxpool_ref(main, [1, h, w, dm]);
    let (ps, _) = maxpool_ref(f_sa, [1, h, w, d]);
    let mut out = Vec::new();
    for p in 0..(h / 2) * (w / 2) {
        out.extend(pm[p * dm..(p + 1) * dm].iter().map(|v| v.max(0.0)));
        out.extend(ps[p * d..(p + 1) * d].iter().map(|v| v.max(0.0)));
    }
    out
}

/// Mean over all (positive, negative) pairs of `[s_p > s_n] + 0.5 [s_p == s_n]`.
pub fn auc_pairwise(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

/// Fraction of an `[h,w]` attention map's mass that falls inside `patch`
/// once upsampled to the `size x size` image.
pub fn patch_mass(alpha: &Tensor64, patch: PatchLocation, size: usize) -> f64 {
    let up = upsample_alpha(alpha, (size, size)).unwrap();
    let mut inside = 0.0;
    for r in patch.row..patch.row + patch.size {
        for c in patch.col..patch.col + patch.size {
            inside += up.at(&[r, c]);
        }
    }
    inside / up.sum()
}

pub fn randn(shape: &[usize], rng: &mut SeededRng) -> Tensor64 {
    Tensor64::randn(shape, rng, 1.0).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
