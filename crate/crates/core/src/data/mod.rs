//! Dataset ingestion, preprocessing, class rebalancing, splitting and the
//! synthetic lesion generator.

mod balance;
mod image_io;
mod manifest;
mod preprocess;
mod synth;

use std::path::Path;

pub use balance::{
    rebalance, rebalance_indices, split_indices, stratified_split, RebalancePolicy, RebalanceTarget, Split, SplitSpec,
};
pub use image_io::{load_image, save_image};
pub use manifest::{load_manifest, parse_manifest, Manifest, ManifestRow};
pub use preprocess::{normalize_255, resize_bilinear};
pub use synth::{patch_from_source_id, synth_lesion_dataset, PatchLocation, SynthSpec};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A labeled image, `[H, W, 3]` with entries in `[0, 1]` once normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub image: Tensor<T>,
    pub label: usize,
    pub source_id: String,
}

/// Loads, resizes to `size x size` and normalizes the images of the given rows.
pub fn load_samples<T: Scalar>(manifest: &Manifest, rows: &[usize], size: usize) -> Result<Vec<Sample<T>>> {
    let labels = manifest.labels();
    rows.iter()
        .map(|&r| {
            let row = &manifest.rows[r];
            let raw: Tensor<T> = load_image(&row.path)?;
            let image = normalize_255(&resize_bilinear(&raw, (size, size))?)?;
            Ok(Sample { image, label: labels[r], source_id: source_id_for(&row.path) })
        })
        .collect()
}

fn source_id_for(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}
