use crate::attention::upsample_alpha;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A display-normalized map and how it is drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap<T> {
    /// `[H, W]` in `[0, 1]`.
    pub values: Tensor<T>,
    pub colormap: &'static str,
    pub blend: f64,
}

/// Jet-style colormap: dark blue at 0 through cyan, yellow to dark red at 1.
/// Channels in `[0, 1]`.
pub fn colormap_jet(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let ch = |center: f64| (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0);
    [ch(3.0), ch(2.0), ch(1.0)]
}

impl<T: Scalar> Heatmap<T> {
    /// Upsamples `alpha` to `(H, W)` and min-max normalizes it. A constant map
    /// becomes uniform 0.5.
    pub fn from_alpha(alpha: &Tensor<T>, size: (usize, usize), blend: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&blend) {
            return Err(Error::Parameter(format!("blend {blend} outside [0, 1]")));
        }
        let up = upsample_alpha(alpha, size)?;
        let (lo, hi) = up.data().iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let values = if hi > lo {
            up.map(|v| (v - lo) / (hi - lo))
        } else {
            log::warn!("attention map is constant; rendering a uniform heatmap");
            up.map(|_| T::of(0.5))
        };
        Ok(Self { values, colormap: "jet", blend })
    }

    /// `[H, W, 3]` colour image in `[0, 255]`.
    pub fn colorize(&self) -> Tensor<T> {
        let data =
            self.values.data().iter().flat_map(|&v| colormap_jet(v.to_f64_lossy()).map(|c| T::of(c * 255.0))).collect();
        let s = self.values.shape();
        Tensor::new(vec![s[0], s[1], 3], data).expect("shape follows values")
    }
}

/// Renders `alpha` (`[h, w]`) as a colour map at the size of `image`
/// (`[H, W, 3]`, values in `[0, 255]`) and blends it over the image:
/// `overlay = blend * map + (1 - blend) * image`.
pub fn render_heatmap<T: Scalar>(alpha: &Tensor<T>, image: &Tensor<T>, blend: f64) -> Result<(Tensor<T>, Tensor<T>)> {
    let &[h, w, 3] = image.shape() else {
        return Err(Error::Shape(format!("image must be [H,W,3], got {:?}", image.shape())));
    };
    let map = Heatmap::from_alpha(alpha, (h, w), blend)?.colorize();
    let overlay = if blend == 0.0 {
        image.clone()
    } else if blend == 1.0 {
        map.clone()
    } else {
        let (b, keep) = (T::of(blend), T::of(1.0 - blend));
        let data = map.data().iter().zip(image.data()).map(|(&m, &x)| b * m + keep * x).collect();
        Tensor::new(vec![h, w, 3], data)?
    };
    Ok((map, overlay))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        let lo = colormap_jet(0.0);
        let hi = colormap_jet(1.0);
        assert!(lo[2] > lo[0], "low end is blue");
        assert!(hi[0] > hi[2], "high end is red");
    }

    #[test]
    fn constant_alpha_is_uniform() {
        let alpha = Tensor::full(&[2, 2], 0.3).unwrap();
        let image = Tensor::full(&[4, 4, 3], 100.0).unwrap();
        let (map, _) = render_heatmap(&alpha, &image, 0.5).unwrap();
        let first = &map.data()[..3];
        assert!(map.data().chunks(3).all(|p| p == first));
    }

    #[test]
    fn blend_identities() {
        let alpha = Tensor::new(vec![2, 2], vec![0.1, 0.9, 0.4, 0.6]).unwrap();
        let image = Tensor::randn(&[6, 6, 3], &mut crate::SeededRng::new(1), 50.0).unwrap();
        let (map, o0) = render_heatmap(&alpha, &image, 0.0).unwrap();
        assert_eq!(o0, image);
        let (_, o1) = render_heatmap(&alpha, &image, 1.0).unwrap();
        assert_eq!(o1, map);
        assert_eq!(map.shape(), &[6, 6, 3]);
        assert!(map.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
        assert!(render_heatmap(&alpha, &image, 1.5).is_err());
    }
}
