//! The loss-function interface shared by the Taylor family, the reference
//! losses and the training engine.

use crate::error::{Error, Result};

/// Tolerance used when checking that predictions lie on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// One example's predicted class probabilities and (one-hot) label vector.
#[derive(Clone, Copy, Debug)]
pub struct LossInput<'a> {
    predictions: &'a [f64],
    labels: &'a [f64],
}

impl<'a> LossInput<'a> {
    /// Validated constructor: predictions on the simplex, labels one-hot.
    pub fn new(predictions: &'a [f64], labels: &'a [f64]) -> Result<Self> {
        let input = Self::unchecked(predictions, labels);
        input.check_shape()?;
        if predictions.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidInput(
                "predictions must be nonnegative".into(),
            ));
        }
        let total: f64 = predictions.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "predictions sum to {total}, expected 1"
            )));
        }
        let ones = labels.iter().filter(|&&y| y == 1.0).count();
        let zeros = labels.iter().filter(|&&y| y == 0.0).count();
        if ones != 1 || ones + zeros != labels.len() {
            return Err(Error::InvalidInput("labels must be one-hot".into()));
        }
        Ok(input)
    }

    /// No simplex or one-hot checks. Used for finite-difference probes and
    /// the training hot path, where the inputs are known to be well formed.
    pub fn unchecked(predictions: &'a [f64], labels: &'a [f64]) -> Self {
        Self {
            predictions,
            labels,
        }
    }

    pub fn predictions(&self) -> &'a [f64] {
        self.predictions
    }

    pub fn labels(&self) -> &'a [f64] {
        self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.predictions.len()
    }

    /// C ≥ 2 and matching lengths.
    pub fn check_shape(&self) -> Result<()> {
        if self.predictions.len() != self.labels.len() {
            return Err(Error::InvalidInput(format!(
                "length mismatch: {} predictions vs {} labels",
                self.predictions.len(),
                self.labels.len()
            )));
        }
        if self.predictions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {}",
                self.predictions.len()
            )));
        }
        Ok(())
    }
}

/// A differentiable classification loss over probability vectors.
///
/// Implementations receive equal-length slices with at least two classes;
/// the gradient is with respect to the predicted probabilities.
pub trait Loss: Send + Sync {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64;

    /// Writes ∂value/∂predictions into `grad` (overwriting it).
    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]);
}

impl<L: Loss + ?Sized> Loss for Box<L> {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        (**self).value(predictions, labels)
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        (**self).gradient(predictions, labels, grad)
    }
}

impl<L: Loss + ?Sized> Loss for &L {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        (**self).value(predictions, labels)
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        (**self).gradient(predictions, labels, grad)
    }
}

/// Writes the one-hot encoding of `label` into `out`.
pub fn one_hot_into(label: usize, out: &mut [f64]) {
    out.fill(0.0);
    out[label] = 1.0;
}
