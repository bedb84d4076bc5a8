use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{argmax_lowest, Network};
use crate::data::{DatasetSplit, Part};
use crate::error::{Error, Result};
use crate::loss::{one_hot_into, Loss};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 128,
            epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly zero is allowed so a run can be used as a
    /// no-op baseline.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParams(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    /// Epoch (1-based) in which a parameter first became non-finite.
    pub diverged_at: Option<usize>,
    /// Clean validation accuracy of the final network; 0 when diverged.
    pub val_accuracy: f64,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Mini-batch SGD with momentum on the (possibly noisy) training part,
/// scoring the clean validation part after every epoch.
pub fn train<L: Loss + ?Sized>(net: &mut Network, loss: &L, data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::InvalidInput("training part is empty".into()));
    }
    if train.feature_len != net.spec().input_len() {
        return Err(Error::InvalidInput(format!(
            "examples have {} features, network expects {}",
            train.feature_len,
            net.spec().input_len()
        )));
    }
    let c = net.spec().num_classes;
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for {c} classes")));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut target = vec![0.0; c];
    let mut grad = vec![0.0; net.num_parameters()];
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                one_hot_into(train.labels[i], &mut target);
                total += net.accumulate_gradient(train.example(i), &target, loss, &mut grad);
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            net.sgd_step(&grad, cfg.learning_rate, cfg.momentum);
            if !net.all_finite() {
                return Ok(TrainReport {
                    curve,
                    diverged_at: Some(epoch),
                    val_accuracy: 0.0,
                });
            }
        }
        curve.push(EpochStats {
            epoch,
            train_loss: total / train.len() as f64,
            val_accuracy: accuracy(net, &data.val)?,
        });
    }
    let val_accuracy = match curve.last() {
        Some(s) => s.val_accuracy,
        None => accuracy(net, &data.val)?,
    };
    Ok(TrainReport {
        curve,
        diverged_at: None,
        val_accuracy,
    })
}

pub fn accuracy(net: &Network, part: &Part) -> Result<f64> {
    if part.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty part".into()));
    }
    let hits = (0..part.len())
        .filter(|&i| argmax_lowest(&net.predict(part.example(i))) == part.labels[i])
        .count();
    Ok(hits as f64 / part.len() as f64)
}

/// `probs` is a flat row-major matrix with `num_classes` columns.
pub fn accuracy_of_predictions(probs: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty part".into()));
    }
    if num_classes == 0 || probs.len() != labels.len() * num_classes {
        return Err(Error::InvalidInput(format!(
            "{} predictions do not match {} labels of {num_classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    let hits = probs
        .chunks_exact(num_classes)
        .zip(labels)
        .filter(|(row, &l)| argmax_lowest(row) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy\n");
    for s in curve {
        let _ = writeln!(out, "{},{:.6},{:.6}", s.epoch, s.train_loss, s.val_accuracy);
    }
    out
}

pub fn write_curve_csv(path: &Path, curve: &[EpochStats]) -> Result<()> {
    std::fs::write(path, curve_csv(curve)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_blobs};
    use crate::nn::{Layer, NetworkSpec};
    use crate::reference::ReferenceLoss;
    use crate::taylor::TaylorLossParams;

    fn blob_split(seed: u64) -> DatasetSplit {
        let ds = synth_blobs(2, 60, 4, 0.3, seed).unwrap();
        split(&ds, 0.25, None, seed).unwrap()
    }

    #[test]
    fn accuracy_fixtures() {
        let uniform = vec![0.5; 8];
        assert_eq!(accuracy_of_predictions(&uniform, 2, &[0, 0, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy_of_predictions(&uniform, 2, &[1, 1, 1, 1]).unwrap(), 0.0);
        let mut probs = Vec::new();
        let labels = [0, 1, 1, 0, 1, 0, 0, 1, 1, 0];
        for (i, &l) in labels.iter().enumerate() {
            let predicted = if i < 7 { l } else { 1 - l };
            probs.extend(if predicted == 0 { [0.8, 0.2] } else { [0.3, 0.7] });
        }
        assert!((accuracy_of_predictions(&probs, 2, &labels).unwrap() - 0.7).abs() < 1e-15);
        assert!(accuracy_of_predictions(&[], 2, &[]).is_err());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let data = blob_split(3);
        let mut net = Network::init(NetworkSpec::mlp("m", 4, &[8], 2), 1).unwrap();
        let before = net.clone();
        let untrained = accuracy(&net, &data.val).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &ReferenceLoss::CrossEntropy, &data, &cfg).unwrap();
        assert_eq!(net.parameters(), before.parameters());
        assert_eq!(report.val_accuracy, untrained);
    }

    #[test]
    fn one_step_matches_hand_backprop() {
        // single dense layer z = Wx + b, p = softmax(z), loss = Taylor MSE
        // embedding ℓ = (1/C) Σ_j (p_j − y_j)²
        let spec = NetworkSpec {
            name: "lin".into(),
            layers: vec![Layer::Dense { inputs: 3, outputs: 3 }],
            input_shape: vec![3],
            num_classes: 3,
        };
        let net = Network::init(spec.clone(), 11).unwrap();
        let x = [0.2, -0.7, 0.5];
        let y = [0.0, 1.0, 0.0];
        let w = net.parameters().to_vec();
        let mut z = [0.0; 3];
        for j in 0..3 {
            z[j] = w[9 + j] + (0..3).map(|i| w[j * 3 + i] * x[i]).sum::<f64>();
        }
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        let dp: Vec<f64> = (0..3).map(|j| 2.0 * (p[j] - y[j]) / 3.0).collect();
        let mut dz = [0.0; 3];
        for k in 0..3 {
            for j in 0..3 {
                let jac = if j == k { p[j] * (1.0 - p[j]) } else { -p[j] * p[k] };
                dz[k] += dp[j] * jac;
            }
        }
        let lr = 0.05;
        let mut expected = w.clone();
        for j in 0..3 {
            for i in 0..3 {
                expected[j * 3 + i] -= lr * dz[j] * x[i];
            }
            expected[9 + j] -= lr * dz[j];
        }

        let mut net = net;
        let loss = TaylorLossParams::mse_embedding(4).unwrap();
        let mut grad = vec![0.0; net.num_parameters()];
        net.accumulate_gradient(&x, &y, &loss, &mut grad);
        net.sgd_step(&grad, lr, 0.9);
        for (a, b) in net.parameters().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = blob_split(4);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 10,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = Network::init(NetworkSpec::mlp("m", 4, &[6], 2), 2).unwrap();
            let r = train(&mut net, &ReferenceLoss::CrossEntropy, &data, &cfg).unwrap();
            (net.parameters().to_vec(), r.curve)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: -0.1, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn curve_csv_format() {
        let csv = curve_csv(&[EpochStats { epoch: 1, train_loss: 0.5, val_accuracy: 0.75 }]);
        assert_eq!(csv, "epoch,train_loss,val_accuracy\n1,0.500000,0.750000\n");
    }
}
