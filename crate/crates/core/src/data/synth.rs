//! Synthetic desk-scale datasets.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{min_max_columns, Dataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_BLOB_DIM: usize = 30;

// Distance of every blob center from the origin before min-max scaling.
const CENTER_RADIUS: f64 = 2.0;

/// Deterministic class centers: the first `num_classes` coordinate axes
/// when they fit, otherwise fixed pseudo-random directions. Depends only on
/// (num_classes, dim).
fn blob_centers(num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    if num_classes <= dim {
        return (0..num_classes)
            .map(|k| {
                let mut c = vec![0.0; dim];
                c[k] = CENTER_RADIUS;
                c
            })
            .collect();
    }
    let mut rng = rng_from_seed(derive_seed(num_classes as u64, dim as u64, 0));
    (0..num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| CENTER_RADIUS * x / norm).collect()
        })
        .collect()
}

/// Gaussian clusters with per-coordinate standard deviation `spread`
/// around deterministic centers, features min-max scaled to [0, 1].
pub fn synth_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if per_class == 0 || dim == 0 || !(spread >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "blobs need per_class ≥ 1, dim ≥ 1, spread ≥ 0 (got {per_class}, {dim}, {spread})"
        )));
    }
    let centers = blob_centers(num_classes, dim);
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                features.push(c + spread * z);
            }
            labels.push(k);
        }
    }
    min_max_columns(&mut features, dim);
    Dataset::new(
        format!("blobs{num_classes}x{per_class}"),
        features,
        vec![dim],
        labels,
        num_classes,
    )
}

/// Concentric annuli in the plane: class k has radius k + 1 with Gaussian
/// radial jitter, uniform angle. Not linearly separable.
pub fn synth_rings(num_classes: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::InvalidInput("rings need per_class ≥ 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(num_classes * per_class * 2);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for k in 0..num_classes {
        for _ in 0..per_class {
            let jitter: f64 = rng.sample(StandardNormal);
            let radius = (k + 1) as f64 + 0.15 * jitter;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            features.push(radius * angle.cos());
            features.push(radius * angle.sin());
            labels.push(k);
        }
    }
    min_max_columns(&mut features, 2);
    Dataset::new(
        format!("rings{num_classes}x{per_class}"),
        features,
        vec![2],
        labels,
        num_classes,
    )
}
