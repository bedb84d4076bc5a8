//! Datasets: IDX ingestion, synthetic generators and clean-validation /
//! noisy-train splitting.

mod idx;
mod selector;
mod split;
mod synth;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IdxOptions, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use selector::DatasetSelector;
pub use split::{split, DatasetSplit, Part, SplitProvenance, DEFAULT_VAL_FRACTION};
pub use synth::{synth_blobs, synth_rings, DEFAULT_BLOB_DIM};

use crate::error::{Error, Result};

/// Features are stored flat, one row of `shape.iter().product()` values per
/// example. `shape` is `[d]` for vector data or `[channels, height, width]`
/// for images.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<f64>,
    shape: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        shape: Vec<usize>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let width: usize = shape.iter().product();
        if shape.is_empty() || width == 0 {
            return Err(Error::InvalidInput(format!("bad example shape {shape:?}")));
        }
        if features.len() != width * labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature values for {} examples of width {width}",
                features.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "a dataset needs at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        if labels.len() < num_classes {
            return Err(Error::InvalidInput(format!(
                "{} examples is fewer than the {num_classes} classes",
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            shape,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn feature_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn example(&self, i: usize) -> &[f64] {
        let w = self.feature_len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Rescales every feature column to [0, 1]; constant columns become 0.
pub(crate) fn min_max_columns(features: &mut [f64], width: usize) {
    for col in 0..width {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in features.chunks_exact(width) {
            lo = lo.min(row[col]);
            hi = hi.max(row[col]);
        }
        let span = hi - lo;
        for row in features.chunks_exact_mut(width) {
            row[col] = if span > 0.0 { (row[col] - lo) / span } else { 0.0 };
        }
    }
}
