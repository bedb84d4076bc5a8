use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::noise::{build_transition, corrupt, NoiseSpec};
use crate::rng::{derive_seed, label_checksum, rng_from_seed, stream};

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Features and labels of one side of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub feature_len: usize,
}

impl Part {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_len..(i + 1) * self.feature_len]
    }

    fn gather(ds: &Dataset, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * ds.feature_len());
        for &i in indices {
            features.extend_from_slice(ds.example(i));
        }
        Part {
            features,
            labels: indices.iter().map(|&i| ds.labels()[i]).collect(),
            feature_len: ds.feature_len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitProvenance {
    pub dataset: String,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub val_fraction: f64,
    /// Number of train labels changed by the noise.
    pub flipped: usize,
}

/// Noisy training part and clean validation part of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Part,
    pub val: Part,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub shape: Vec<usize>,
    pub num_classes: usize,
    pub provenance: SplitProvenance,
}

impl DatasetSplit {
    pub fn val_checksum(&self) -> u64 {
        label_checksum(&self.val.labels)
    }

    /// Checksum of the source labels at the validation indices; equals
    /// [`val_checksum`](Self::val_checksum) when validation labels are clean.
    pub fn source_val_checksum(&self, source: &Dataset) -> u64 {
        let labels: Vec<usize> = self.val_indices.iter().map(|&i| source.labels()[i]).collect();
        label_checksum(&labels)
    }
}

/// Stratified shuffle-split; `noise` corrupts the training labels only.
pub fn split(ds: &Dataset, val_fraction: f64, noise: Option<&NoiseSpec>, seed: u64) -> Result<DatasetSplit> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    if let Some(spec) = noise {
        if spec.num_classes() != ds.num_classes() {
            return Err(Error::InvalidInput(format!(
                "noise built for {} classes, dataset has {}",
                spec.num_classes(),
                ds.num_classes()
            )));
        }
    }
    let mut by_class = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::SPLIT, 0));
    let mut train_indices = Vec::new();
    let mut val_indices = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} examples; splitting needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_val = ((members.len() as f64 * val_fraction).round() as usize).clamp(1, members.len() - 1);
        val_indices.extend_from_slice(&members[..n_val]);
        train_indices.extend_from_slice(&members[n_val..]);
    }
    train_indices.sort_unstable();
    val_indices.sort_unstable();

    let mut train = Part::gather(ds, &train_indices);
    let val = Part::gather(ds, &val_indices);
    let mut flipped = 0;
    if let Some(spec) = noise {
        let t = build_transition(spec);
        let out = corrupt(&train.labels, &t, derive_seed(seed, stream::NOISE, 0))?;
        flipped = out.flip_count();
        train.labels = out.labels;
    }
    Ok(DatasetSplit {
        train,
        val,
        train_indices,
        val_indices,
        shape: ds.shape().to_vec(),
        num_classes: ds.num_classes(),
        provenance: SplitProvenance {
            dataset: ds.name().to_string(),
            noise: noise.cloned(),
            seed,
            val_fraction,
            flipped,
        },
    })
}
