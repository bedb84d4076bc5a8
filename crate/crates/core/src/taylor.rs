//! Taylor-polynomial loss family.
//!
//! A loss in this family is class-wise separable: the same two-argument
//! polynomial is applied to every (predicted probability, label) pair and
//! the results are averaged over classes. The per-class polynomial of order
//! β around the expansion point (θ₀, θ₁) is
//!
//! ```text
//! ℓ(ŷ, y) = Σ_{a ≥ 1, b ≥ 0, a + b ≤ β} θ_(a,b) / (a!·b!) · (ŷ − θ₀)^a · (y − θ₁)^b
//! ```
//!
//! Terms without ŷ (a = 0) are omitted since they shift the loss by a
//! constant and never change its gradient.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Loss, LossInput};
use crate::rng::{rng_from_seed, sample_one_hot, sample_simplex};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_ETA: f64 = 1.0;
pub const DEFAULT_RANGE_SAMPLES: usize = 10_000;

/// Candidates whose sampled range is narrower than this are treated as
/// constant losses.
pub const DEGENERATE_RANGE: f64 = 1e-9;

pub const LOSS_FILE_VERSION: u32 = 1;

pub const MAX_ORDER: usize = 12;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Parameters of one Taylor loss: order, expansion point and the graded
/// coefficient table, stored in lexicographic (a, b) order.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorLossParams {
    order: usize,
    expansion_point: [f64; 2],
    coefficients: Vec<f64>,
    // scaled[a * (order + 1) + b] = θ_(a,b) / (a!·b!), zero for absent terms
    scaled: Vec<f64>,
}

impl TaylorLossParams {
    pub fn new(order: usize, expansion_point: [f64; 2], coefficients: Vec<f64>) -> Result<Self> {
        check_order(order)?;
        let expected = Self::num_coefficients(order);
        if coefficients.len() != expected {
            return Err(Error::InvalidParams(format!(
                "order {order} needs {expected} coefficients, got {}",
                coefficients.len()
            )));
        }
        if expansion_point.iter().chain(&coefficients).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "Taylor loss parameters must be finite".into(),
            ));
        }
        let mut params = Self {
            order,
            expansion_point,
            coefficients,
            scaled: Vec::new(),
        };
        params.rebuild_scaled();
        Ok(params)
    }

    /// All coefficients zero, expansion point at the origin.
    pub fn zeros(order: usize) -> Result<Self> {
        Self::new(order, [0.0, 0.0], vec![0.0; Self::num_coefficients(order)])
    }

    /// Order-4 loss equal to Σᵢ(ŷᵢ² − 2ŷᵢyᵢ)/C, i.e. mean squared error up
    /// to a label-only constant.
    pub fn mse_embedding(order: usize) -> Result<Self> {
        let mut p = Self::zeros(order)?;
        p.set_coefficient(2, 0, 2.0)?;
        p.set_coefficient(1, 1, -2.0)?;
        Ok(p)
    }

    /// Builds parameters from explicit `(a, b) → value` entries; every key
    /// of the order must be present exactly once.
    pub fn from_terms<I>(order: usize, expansion_point: [f64; 2], terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), f64)>,
    {
        check_order(order)?;
        let mut slots: Vec<Option<f64>> = vec![None; Self::num_coefficients(order)];
        for ((a, b), v) in terms {
            let idx = Self::term_index(order, a, b).ok_or_else(|| {
                Error::InvalidParams(format!(
                    "coefficient ({a},{b}) is not a term of an order-{order} loss"
                ))
            })?;
            if slots[idx].replace(v).is_some() {
                return Err(Error::InvalidParams(format!(
                    "duplicate coefficient ({a},{b})"
                )));
            }
        }
        let mut coefficients = Vec::with_capacity(slots.len());
        for ((a, b), slot) in Self::term_keys(order).zip(slots) {
            match slot {
                Some(v) => coefficients.push(v),
                None => {
                    return Err(Error::InvalidParams(format!(
                        "missing coefficient ({a},{b})"
                    )))
                }
            }
        }
        Self::new(order, expansion_point, coefficients)
    }

    /// β(β+1)/2.
    pub fn num_coefficients(order: usize) -> usize {
        order * (order + 1) / 2
    }

    /// Length of the flat search vector: expansion point plus coefficients.
    pub fn flat_dimension(order: usize) -> usize {
        2 + Self::num_coefficients(order)
    }

    /// Coefficient keys in lexicographic (a, b) order.
    pub fn term_keys(order: usize) -> impl Iterator<Item = (usize, usize)> {
        (1..=order).flat_map(move |a| (0..=order - a).map(move |b| (a, b)))
    }

    fn term_index(order: usize, a: usize, b: usize) -> Option<usize> {
        if a == 0 || a + b > order {
            return None;
        }
        // keys with first index a' < a come first; each a' has order − a' + 1 of them
        let before: usize = (1..a).map(|ap| order - ap + 1).sum();
        Some(before + b)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn expansion_point(&self) -> [f64; 2] {
        self.expansion_point
    }

    /// Coefficients in lexicographic (a, b) order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, a: usize, b: usize) -> Option<f64> {
        Self::term_index(self.order, a, b).map(|i| self.coefficients[i])
    }

    pub fn set_coefficient(&mut self, a: usize, b: usize, value: f64) -> Result<()> {
        let idx = Self::term_index(self.order, a, b).ok_or_else(|| {
            Error::InvalidParams(format!(
                "coefficient ({a},{b}) is not a term of an order-{} loss",
                self.order
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::InvalidParams("coefficient must be finite".into()));
        }
        self.coefficients[idx] = value;
        self.rebuild_scaled();
        Ok(())
    }

    /// `((a, b), θ_(a,b))` pairs in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        Self::term_keys(self.order).zip(self.coefficients.iter().copied())
    }

    /// Flat vector θ₀, θ₁, then the coefficients in lexicographic order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::flat_dimension(self.order));
        v.extend_from_slice(&self.expansion_point);
        v.extend_from_slice(&self.coefficients);
        v
    }

    pub fn from_flat(order: usize, flat: &[f64]) -> Result<Self> {
        check_order(order)?;
        if flat.len() != Self::flat_dimension(order) {
            return Err(Error::InvalidParams(format!(
                "order {order} flat vector must have length {}, got {}",
                Self::flat_dimension(order),
                flat.len()
            )));
        }
        Self::new(order, [flat[0], flat[1]], flat[2..].to_vec())
    }

    fn rebuild_scaled(&mut self) {
        let w = self.order + 1;
        let mut scaled = vec![0.0; w * w];
        for ((a, b), v) in Self::term_keys(self.order).zip(&self.coefficients) {
            scaled[a * w + b] = v / (factorial(a) * factorial(b));
        }
        self.scaled = scaled;
    }

    // Σ_b scaled[a][b]·v^b for every a, by Horner in v.
    #[inline]
    fn label_polys(&self, y: f64, out: &mut [f64; MAX_ORDER + 1]) {
        let w = self.order + 1;
        let v = y - self.expansion_point[1];
        for a in 1..=self.order {
            let row = &self.scaled[a * w..a * w + (self.order - a + 1)];
            out[a] = row.iter().rev().fold(0.0, |acc, &c| acc * v + c);
        }
    }

    /// Per-class polynomial ℓ(ŷᵢ, yᵢ).
    pub fn eval_per_class(&self, yhat: f64, y: f64) -> f64 {
        let mut inner = [0.0; MAX_ORDER + 1];
        self.label_polys(y, &mut inner);
        let u = yhat - self.expansion_point[0];
        // Horner in u over a = order..1, then one more factor of u
        let mut acc = 0.0;
        for a in (1..=self.order).rev() {
            acc = acc * u + inner[a];
        }
        acc * u
    }

    /// ∂ℓ/∂ŷᵢ of the per-class polynomial.
    pub fn grad_per_class(&self, yhat: f64, y: f64) -> f64 {
        let mut inner = [0.0; MAX_ORDER + 1];
        self.label_polys(y, &mut inner);
        let u = yhat - self.expansion_point[0];
        let mut acc = 0.0;
        for a in (1..=self.order).rev() {
            acc = acc * u + a as f64 * inner[a];
        }
        acc
    }

    /// Mean of the per-class polynomial over classes.
    pub fn eval(&self, input: &LossInput) -> Result<f64> {
        input.check_shape()?;
        Ok(self.value(input.predictions(), input.labels()))
    }

    /// Analytic gradient of [`eval`](Self::eval) with respect to ŷ.
    pub fn grad(&self, input: &LossInput) -> Result<Vec<f64>> {
        input.check_shape()?;
        let mut g = vec![0.0; input.num_classes()];
        self.gradient(input.predictions(), input.labels(), &mut g);
        Ok(g)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidParams(format!(
            "Taylor order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    Ok(())
}

impl Loss for TaylorLossParams {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        let total: f64 = predictions
            .iter()
            .zip(labels)
            .map(|(&p, &y)| self.eval_per_class(p, y))
            .sum();
        total / predictions.len() as f64
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        let c = predictions.len() as f64;
        for ((g, &p), &y) in grad.iter_mut().zip(predictions).zip(labels) {
            *g = self.grad_per_class(p, y) / c;
        }
    }
}

/// Estimates (f_min, f_max) of the loss over the classification domain by
/// sampling ŷ uniformly on the simplex and y uniformly among one-hot vectors.
pub fn estimate_range(
    params: &TaylorLossParams,
    num_classes: usize,
    num_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if num_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "range estimation needs at least 2 classes, got {num_classes}"
        )));
    }
    if num_samples == 0 {
        return Err(Error::InvalidInput(
            "range estimation needs at least one sample".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut yhat = vec![0.0; num_classes];
    let mut y = vec![0.0; num_classes];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..num_samples {
        sample_simplex(&mut rng, &mut yhat);
        sample_one_hot(&mut rng, &mut y);
        let f = params.value(&yhat, &y);
        lo = lo.min(f);
        hi = hi.max(f);
    }
    Ok((lo, hi))
}

/// Draws a random parameter set with every entry uniform in [−scale, scale].
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, order: usize, scale: f64) -> Result<TaylorLossParams> {
    let flat: Vec<f64> = (0..TaylorLossParams::flat_dimension(order))
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    TaylorLossParams::from_flat(order, &flat)
}

/// A Taylor loss rescaled to an approximate [0, η] output range.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedLoss {
    inner: TaylorLossParams,
    f_min: f64,
    f_max: f64,
    eta: f64,
}

impl NormalizedLoss {
    pub fn new(inner: TaylorLossParams, f_min: f64, f_max: f64, eta: f64) -> Result<Self> {
        if !(f_min.is_finite() && f_max.is_finite()) || f_max <= f_min {
            return Err(Error::InvalidParams(format!(
                "normalization needs f_max > f_min, got f_min={f_min}, f_max={f_max}"
            )));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
        }
        Ok(Self {
            inner,
            f_min,
            f_max,
            eta,
        })
    }

    /// Estimates the range and normalizes; `None` when the sampled range is
    /// below [`DEGENERATE_RANGE`] (a constant loss).
    pub fn fit(
        inner: TaylorLossParams,
        num_classes: usize,
        num_samples: usize,
        seed: u64,
        eta: f64,
    ) -> Result<Option<Self>> {
        let (lo, hi) = estimate_range(&inner, num_classes, num_samples, seed)?;
        if !(hi - lo >= DEGENERATE_RANGE) {
            return Ok(None);
        }
        Self::new(inner, lo, hi, eta).map(Some)
    }

    pub fn inner(&self) -> &TaylorLossParams {
        &self.inner
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn slope(&self) -> f64 {
        self.eta / (self.f_max - self.f_min)
    }

    /// η·(f − f_min)/(f_max − f_min).
    pub fn normalized_eval(&self, input: &LossInput) -> Result<f64> {
        let f = self.inner.eval(input)?;
        Ok(self.rescale(f))
    }

    pub fn rescale(&self, f: f64) -> f64 {
        self.slope() * (f - self.f_min)
    }

    pub fn normalized_grad(&self, input: &LossInput) -> Result<Vec<f64>> {
        input.check_shape()?;
        let mut g = vec![0.0; input.num_classes()];
        self.gradient(input.predictions(), input.labels(), &mut g);
        Ok(g)
    }
}

impl Loss for NormalizedLoss {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        self.rescale(self.inner.value(predictions, labels))
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        self.inner.gradient(predictions, labels, grad);
        let s = self.slope();
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// What a loss file holds: a Taylor loss with or without normalization.
#[derive(Clone, Debug, PartialEq)]
pub enum LearnedLoss {
    Normalized(NormalizedLoss),
    Raw(TaylorLossParams),
}

impl LearnedLoss {
    pub fn params(&self) -> &TaylorLossParams {
        match self {
            LearnedLoss::Normalized(n) => n.inner(),
            LearnedLoss::Raw(p) => p,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = LossFileRepr::from(self);
        let mut s = serde_json::to_string_pretty(&repr)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: LossFileRepr =
            serde_json::from_str(text).map_err(|e| Error::LossFile(e.to_string()))?;
        repr.into_loss()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Loss for LearnedLoss {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        match self {
            LearnedLoss::Normalized(n) => n.value(predictions, labels),
            LearnedLoss::Raw(p) => p.value(predictions, labels),
        }
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        match self {
            LearnedLoss::Normalized(n) => n.gradient(predictions, labels, grad),
            LearnedLoss::Raw(p) => p.gradient(predictions, labels, grad),
        }
    }
}

/// Serializes a normalized loss to loss-file bytes.
pub fn serialize(nl: &NormalizedLoss) -> Result<Vec<u8>> {
    Ok(LearnedLoss::Normalized(nl.clone()).to_json()?.into_bytes())
}

/// Parses loss-file bytes; the file must carry a normalization block.
pub fn deserialize(bytes: &[u8]) -> Result<NormalizedLoss> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::LossFile(e.to_string()))?;
    match LearnedLoss::from_json(text)? {
        LearnedLoss::Normalized(n) => Ok(n),
        LearnedLoss::Raw(_) => Err(Error::LossFile(
            "file has no normalization block".into(),
        )),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossFileRepr {
    version: u32,
    order: usize,
    expansion_point: [f64; 2],
    coefficients: Vec<CoefficientRepr>,
    normalization: Option<NormalizationRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientRepr {
    a: usize,
    b: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizationRepr {
    eta: f64,
    f_min: f64,
    f_max: f64,
}

impl From<&LearnedLoss> for LossFileRepr {
    fn from(loss: &LearnedLoss) -> Self {
        let params = loss.params();
        let normalization = match loss {
            LearnedLoss::Normalized(n) => Some(NormalizationRepr {
                eta: n.eta,
                f_min: n.f_min,
                f_max: n.f_max,
            }),
            LearnedLoss::Raw(_) => None,
        };
        LossFileRepr {
            version: LOSS_FILE_VERSION,
            order: params.order,
            expansion_point: params.expansion_point,
            coefficients: params
                .terms()
                .map(|((a, b), value)| CoefficientRepr { a, b, value })
                .collect(),
            normalization,
        }
    }
}

impl LossFileRepr {
    fn into_loss(self) -> Result<LearnedLoss> {
        if self.version != LOSS_FILE_VERSION {
            return Err(Error::LossFile(format!(
                "unknown loss file version {} (supported: {LOSS_FILE_VERSION})",
                self.version
            )));
        }
        let params = TaylorLossParams::from_terms(
            self.order,
            self.expansion_point,
            self.coefficients.into_iter().map(|c| ((c.a, c.b), c.value)),
        )
        .map_err(|e| Error::LossFile(e.to_string()))?;
        match self.normalization {
            None => Ok(LearnedLoss::Raw(params)),
            Some(n) => NormalizedLoss::new(params, n.f_min, n.f_max, n.eta)
                .map(LearnedLoss::Normalized)
                .map_err(|e| Error::LossFile(e.to_string())),
        }
    }
}
