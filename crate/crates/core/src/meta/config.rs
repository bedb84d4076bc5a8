use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSelector, DEFAULT_VAL_FRACTION};
use crate::error::{Error, Result};
use crate::nn::{Architecture, TrainConfig};
use crate::noise::NoiseSetting;
use crate::taylor::{TaylorLossParams, DEFAULT_ETA, DEFAULT_ORDER, DEFAULT_RANGE_SAMPLES, MAX_ORDER};

/// Which pools fitness is averaged over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Several architectures, one dataset.
    #[serde(rename = "AR", alias = "ar")]
    Ar,
    /// Several datasets, one architecture.
    #[serde(rename = "DR", alias = "dr")]
    Dr,
    /// Every architecture on every dataset.
    #[serde(rename = "Full", alias = "full")]
    Full,
}

/// Inner-loop training budget. Shuffle seeds are derived per job, so there
/// is no seed here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerLoop {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for InnerLoop {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

impl InnerLoop {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaSettings {
    /// Population size; `null` picks 4 + ⌊3 ln n⌋.
    pub lambda: Option<usize>,
    pub sigma0: f64,
    /// Initial mean in flat parameter order; `null` is the zero vector.
    pub mean0: Option<Vec<f64>>,
    pub max_generations: usize,
    /// Stop early when the best score stalls for 10 generations.
    pub stagnation: bool,
}

impl Default for CmaSettings {
    fn default() -> Self {
        Self {
            lambda: None,
            sigma0: 0.5,
            mean0: None,
            max_generations: 30,
            stagnation: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSettings {
    pub order: usize,
    pub eta: f64,
    pub range_samples: usize,
    /// Class count used for range estimation; `null` uses the largest class
    /// count in the dataset pool.
    pub range_classes: Option<usize>,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            eta: DEFAULT_ETA,
            range_samples: DEFAULT_RANGE_SAMPLES,
            range_classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub mode: Mode,
    pub architectures: Vec<Architecture>,
    pub datasets: Vec<DatasetSelector>,
    pub noise: NoiseSetting,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub train: InnerLoop,
    #[serde(default)]
    pub cma: CmaSettings,
    #[serde(default)]
    pub loss: LossSettings,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
}

fn default_val_fraction() -> f64 {
    DEFAULT_VAL_FRACTION
}

impl MetaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn flat_dimension(&self) -> usize {
        TaylorLossParams::flat_dimension(self.loss.order)
    }

    pub fn mean0(&self) -> Vec<f64> {
        self.cma.mean0.clone().unwrap_or_else(|| vec![0.0; self.flat_dimension()])
    }

    /// Checks the config and returns warnings that do not stop a run.
    pub fn validate(&self) -> Result<Vec<String>> {
        let fail = |m: String| Err(Error::Config(m));
        if self.architectures.is_empty() {
            return fail("`architectures` must not be empty".into());
        }
        if self.datasets.is_empty() {
            return fail("`datasets` must not be empty".into());
        }
        let mut warnings = Vec::new();
        match self.mode {
            Mode::Ar if self.datasets.len() != 1 => {
                return fail(format!("mode AR needs exactly one dataset, got {}", self.datasets.len()));
            }
            Mode::Dr if self.architectures.len() != 1 => {
                return fail(format!(
                    "mode DR needs exactly one architecture, got {}",
                    self.architectures.len()
                ));
            }
            Mode::Full => warnings.push(format!(
                "mode Full trains {} networks per candidate per generation",
                self.architectures.len() * self.datasets.len()
            )),
            _ => {}
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!("`val_fraction` must be in (0,1), got {}", self.val_fraction));
        }
        self.train.with_seed(0).validate().map_err(|e| Error::Config(format!("`train`: {e}")))?;
        if self.loss.order == 0 || self.loss.order > MAX_ORDER {
            return fail(format!("`loss.order` must be in 1..={MAX_ORDER}, got {}", self.loss.order));
        }
        if !(self.loss.eta > 0.0 && self.loss.eta.is_finite()) {
            return fail(format!("`loss.eta` must be positive, got {}", self.loss.eta));
        }
        if self.loss.range_samples == 0 {
            return fail("`loss.range_samples` must be at least 1".into());
        }
        if matches!(self.loss.range_classes, Some(c) if c < 2) {
            return fail("`loss.range_classes` must be at least 2".into());
        }
        if !(self.cma.sigma0 > 0.0 && self.cma.sigma0.is_finite()) {
            return fail(format!("`cma.sigma0` must be positive, got {}", self.cma.sigma0));
        }
        if matches!(self.cma.lambda, Some(l) if l < 2) {
            return fail("`cma.lambda` must be at least 2".into());
        }
        if let Some(m) = &self.cma.mean0 {
            if m.len() != self.flat_dimension() {
                return fail(format!(
                    "`cma.mean0` has {} entries, order {} needs {}",
                    m.len(),
                    self.loss.order,
                    self.flat_dimension()
                ));
            }
        }
        Ok(warnings)
    }

    /// True when a checkpoint written under `other` can continue under
    /// `self`: only the generation budget and the worker count may differ.
    pub fn resumable_from(&self, other: &MetaConfig) -> bool {
        let strip = |c: &MetaConfig| {
            let mut c = c.clone();
            c.cma.max_generations = 0;
            c.workers = 0;
            c
        };
        strip(self) == strip(other)
    }
}
