use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Source coordinate and interpolation weight for output position `i` when
/// mapping `src` samples onto `dst` with aligned corners.
fn source_coord<T: Scalar>(i: usize, src: usize, dst: usize) -> (usize, usize, T) {
    if src == 1 {
        return (0, 0, T::zero());
    }
    let pos =
        if dst == 1 { T::of_usize(src - 1) / T::of(2.0) } else { T::of_usize(i * (src - 1)) / T::of_usize(dst - 1) };
    let lo = pos.floor().to_usize().unwrap_or(0).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - T::of_usize(lo))
}

/// Per-channel bilinear resampling of `[H, W, C]` to `(H', W')`, corner-aligned
/// so the border samples map onto each other exactly.
pub fn resize_bilinear<T: Scalar>(x: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let &[h, w, c] = x.shape() else {
        return Err(Error::Shape(format!("expected [H,W,C], got {:?}", x.shape())));
    };
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Parameter(format!("target size {th}x{tw} has a zero dimension")));
    }
    if (th, tw) == (h, w) {
        return Ok(x.clone());
    }
    let xd = x.data();
    let px = |y: usize, xx: usize, ch: usize| xd[(y * w + xx) * c + ch];
    let cols: Vec<(usize, usize, T)> = (0..tw).map(|j| source_coord(j, w, tw)).collect();
    let mut out = Vec::with_capacity(th * tw * c);
    for i in 0..th {
        let (y0, y1, fy) = source_coord::<T>(i, h, th);
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let top = px(y0, x0, ch) * (T::one() - fx) + px(y0, x1, ch) * fx;
                let bottom = px(y1, x0, ch) * (T::one() - fx) + px(y1, x1, ch) * fx;
                out.push(top * (T::one() - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![th, tw, c], out)
}

/// Maps 8-bit intensities in `[0, 255]` to `[0, 1]`.
pub fn normalize_255<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let max = T::of(255.0);
    if let Some(v) = x.data().iter().find(|&&v| !(v >= T::zero() && v <= max)) {
        return Err(Error::Contract(format!("pixel value {v} outside [0, 255]")));
    }
    Ok(x.map(|v| v / max))
}
