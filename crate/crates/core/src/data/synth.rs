use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const BACKGROUND: f64 = 0.25;
const LESION: f64 = 0.85;

/// Parameters of the two-class synthetic lesion set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_per_class: 32, image_size: 32, patch_size: 8, noise_std: 0.1 }
    }
}

/// Top-left corner and side of a generated lesion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLocation {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

/// Class 0: background with per-pixel Gaussian grain only. Class 1: the same background with a
/// bright `patch_size` square at a uniformly random position. The patch
/// location of class-1 samples is encoded in `source_id` (see
/// [`patch_from_source_id`]). Samples alternate between the two classes.
pub fn synth_lesion_dataset<T: Scalar>(spec: &SynthSpec, rng: &mut SeededRng) -> Result<Vec<Sample<T>>> {
    let SynthSpec { n_per_class, image_size: size, patch_size: patch, noise_std } = *spec;
    if patch == 0 || patch >= size {
        return Err(Error::Parameter(format!("patch size {patch} must be in [1, {size})")));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Parameter(format!("noise stddev must be non-negative, got {noise_std}")));
    }
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = i % 2;
        let mut data: Vec<f64> = (0..size * size * 3)
            .map(|_| if noise_std > 0.0 { BACKGROUND + noise_std * rng.normal() } else { BACKGROUND })
            .collect();
        let mut source_id = format!("synth{i:05}_c{label}");
        if label == 1 {
            let row = rng.below(size - patch + 1);
            let col = rng.below(size - patch + 1);
            for r in row..row + patch {
                for c in col..col + patch {
                    for ch in 0..3 {
                        data[(r * size + c) * 3 + ch] += LESION - BACKGROUND;
                    }
                }
            }
            source_id.push_str(&format!("_p{row}x{col}x{patch}"));
        }
        let image = Tensor::new(vec![size, size, 3], data.into_iter().map(|v| T::of(v.clamp(0.0, 1.0))).collect())?;
        out.push(Sample { image, label, source_id });
    }
    Ok(out)
}

/// Patch location recorded by [`synth_lesion_dataset`], if any.
pub fn patch_from_source_id(id: &str) -> Option<PatchLocation> {
    let tail = id.rsplit_once("_p")?.1;
    let mut it = tail.split('x').map(str::parse::<usize>);
    let (row, col, size) = (it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
    Some(PatchLocation { row, col, size })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lesion_is_brighter() {
        let spec = SynthSpec { n_per_class: 1, ..Default::default() };
        let s: Vec<Sample<f64>> = synth_lesion_dataset(&spec, &mut SeededRng::new(3)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].label, s[1].label), (0, 1));
        assert!(patch_from_source_id(&s[0].source_id).is_none());
        let p = patch_from_source_id(&s[1].source_id).unwrap();
        assert_eq!(p.size, 8);
        let img = &s[1].image;
        let (mut inside, mut outside, mut n_in) = (0.0, 0.0, 0);
        for r in 0..32 {
            for c in 0..32 {
                let v: f64 = (0..3).map(|ch| img.at(&[r, c, ch])).sum::<f64>() / 3.0;
                if (p.row..p.row + 8).contains(&r) && (p.col..p.col + 8).contains(&c) {
                    inside += v;
                    n_in += 1;
                } else {
                    outside += v;
                }
            }
        }
        let diff = inside / n_in as f64 - outside / (1024 - n_in) as f64;
        assert!(diff >= 0.5, "{diff}");
    }

    #[test]
    fn zero_noise_background_is_constant() {
        let spec = SynthSpec { n_per_class: 2, noise_std: 0.0, ..Default::default() };
        let s: Vec<Sample<f64>> = synth_lesion_dataset(&spec, &mut SeededRng::new(0)).unwrap();
        for sample in s.iter().filter(|s| s.label == 0) {
            assert!(sample.image.data().iter().all(|&v| v == BACKGROUND));
        }
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec { n_per_class: 3, ..Default::default() };
        let a: Vec<Sample<f64>> = synth_lesion_dataset(&spec, &mut SeededRng::new(7)).unwrap();
        let b: Vec<Sample<f64>> = synth_lesion_dataset(&spec, &mut SeededRng::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_sizes() {
        for spec in [
            SynthSpec { patch_size: 32, ..Default::default() },
            SynthSpec { patch_size: 0, ..Default::default() },
            SynthSpec { noise_std: -1.0, ..Default::default() },
        ] {
            let r = synth_lesion_dataset::<f64>(&spec, &mut SeededRng::new(0));
            assert!(matches!(r, Err(Error::Parameter(_))));
        }
    }
}
