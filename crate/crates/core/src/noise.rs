//! Label-noise transition matrices and label corruption.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Flip to a uniformly chosen other class.
    Symmetric,
    /// Pair-flip: flip to one designated other class.
    Asymmetric,
}

/// A noise model bound to a class count.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    ratio: f64,
    num_classes: usize,
    /// Flip target of each class for pair-flip noise; cyclic successor when
    /// not given.
    pairing: Option<Vec<usize>>,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, ratio: f64, num_classes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidParams(format!(
                "noise ratio must be in [0, 1), got {ratio}"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidParams(format!(
                "noise needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            kind,
            ratio,
            num_classes,
            pairing: None,
        })
    }

    /// Pair-flip noise with an explicit target permutation. The permutation
    /// must not map any class to itself.
    pub fn with_pairing(mut self, pairing: Vec<usize>) -> Result<Self> {
        let c = self.num_classes;
        if pairing.len() != c {
            return Err(Error::InvalidParams(format!(
                "pairing must list {c} targets, got {}",
                pairing.len()
            )));
        }
        let mut seen = vec![false; c];
        for (i, &t) in pairing.iter().enumerate() {
            if t >= c || seen[t] {
                return Err(Error::InvalidParams(
                    "pairing must be a permutation of the classes".into(),
                ));
            }
            if t == i {
                return Err(Error::InvalidParams(format!(
                    "pairing maps class {i} to itself"
                )));
            }
            seen[t] = true;
        }
        self.pairing = Some(pairing);
        Ok(self)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn flip_target(&self, class: usize) -> usize {
        match &self.pairing {
            Some(p) => p[class],
            None => (class + 1) % self.num_classes,
        }
    }
}

/// Row-stochastic matrix: `get(i, j)` = P(observed j | true i).
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    num_classes: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn identity(num_classes: usize) -> Self {
        let mut entries = vec![0.0; num_classes * num_classes];
        for i in 0..num_classes {
            entries[i * num_classes + i] = 1.0;
        }
        Self {
            num_classes,
            entries,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.num_classes + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// One line per row, comma-separated, fixed precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.num_classes {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn build_transition(spec: &NoiseSpec) -> TransitionMatrix {
    let c = spec.num_classes;
    let r = spec.ratio;
    let mut t = TransitionMatrix::identity(c);
    for i in 0..c {
        match spec.kind {
            NoiseKind::Symmetric => {
                let off = r / (c - 1) as f64;
                for j in 0..c {
                    t.entries[i * c + j] = if i == j { 1.0 - r } else { off };
                }
            }
            NoiseKind::Asymmetric => {
                t.entries[i * c + i] = 1.0 - r;
                t.entries[i * c + spec.flip_target(i)] = r;
            }
        }
    }
    t
}

/// Result of corrupting a label vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrupted {
    pub labels: Vec<usize>,
    /// True where the observed label differs from the input.
    pub flipped: Vec<bool>,
}

impl Corrupted {
    pub fn flip_count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }
}

/// Resamples every label independently from its row of `t`.
pub fn corrupt(labels: &[usize], t: &TransitionMatrix, seed: u64) -> Result<Corrupted> {
    let c = t.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(labels.len());
    let mut flipped = Vec::with_capacity(labels.len());
    for &l in labels {
        let row = t.row(l);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut observed = c - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                observed = j;
                break;
            }
        }
        // rounding can leave acc slightly below 1; fall back to the last
        // class with positive mass
        if u >= acc {
            observed = row.iter().rposition(|&p| p > 0.0).unwrap_or(l);
        }
        out.push(observed);
        flipped.push(observed != l);
    }
    Ok(Corrupted {
        labels: out,
        flipped,
    })
}

/// Noise as written in configs and on the command line: `none`,
/// `sym:<r>` or `asym:<r>`. The class count is bound later.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseSetting {
    None,
    Symmetric(f64),
    Asymmetric(f64),
}

impl NoiseSetting {
    pub fn bind(&self, num_classes: usize) -> Result<Option<NoiseSpec>> {
        match *self {
            NoiseSetting::None => Ok(None),
            NoiseSetting::Symmetric(r) => NoiseSpec::new(NoiseKind::Symmetric, r, num_classes).map(Some),
            NoiseSetting::Asymmetric(r) => NoiseSpec::new(NoiseKind::Asymmetric, r, num_classes).map(Some),
        }
    }
}

impl FromStr for NoiseSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(NoiseSetting::None);
        }
        let (kind, ratio) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad noise `{s}`: expected none, sym:<r> or asym:<r>")))?;
        let r: f64 = ratio
            .parse()
            .map_err(|_| Error::Config(format!("bad noise ratio `{ratio}`")))?;
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Config(format!("noise ratio must be in [0, 1), got {r}")));
        }
        match kind {
            "sym" => Ok(NoiseSetting::Symmetric(r)),
            "asym" => Ok(NoiseSetting::Asymmetric(r)),
            _ => Err(Error::Config(format!("unknown noise kind `{kind}`"))),
        }
    }
}

impl fmt::Display for NoiseSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSetting::None => write!(f, "none"),
            NoiseSetting::Symmetric(r) => write!(f, "sym:{r}"),
            NoiseSetting::Asymmetric(r) => write!(f, "asym:{r}"),
        }
    }
}

impl Serialize for NoiseSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NoiseSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
