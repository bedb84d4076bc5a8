//! Hand-designed comparison losses: CE, MAE, GCE, SCE, label smoothing and
//! bootstrapping, with analytic gradients.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Loss, LossInput};

/// Lower clamp applied to probabilities before logarithms and powers.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0)
}

/// Overridable hyperparameters for the parameterized reference losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceDefaults {
    pub gce_q: f64,
    pub sce_alpha: f64,
    pub sce_beta: f64,
    pub sce_log_zero: f64,
    pub ls_epsilon: f64,
    pub bootstrap_weight: f64,
    pub bootstrap_hard: bool,
}

impl Default for ReferenceDefaults {
    fn default() -> Self {
        Self {
            gce_q: 0.7,
            sce_alpha: 0.1,
            sce_beta: 1.0,
            sce_log_zero: -4.0,
            ls_epsilon: 0.1,
            bootstrap_weight: 0.95,
            bootstrap_hard: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceLoss {
    CrossEntropy,
    Mae,
    /// Generalized cross-entropy (1 − ŷ_t^q)/q.
    Gce { q: f64 },
    /// α·CE + β·RCE, where RCE takes ln 0 := `log_zero`.
    Sce { alpha: f64, beta: f64, log_zero: f64 },
    LabelSmooth { epsilon: f64 },
    /// CE against `weight`·label + (1 − `weight`)·prediction, where the
    /// prediction is the soft probabilities or, if `hard`, their argmax.
    Bootstrap { weight: f64, hard: bool },
}

impl ReferenceLoss {
    /// Resolves a CLI selector (`ce`, `mae`, `gce`, `sce`, `ls`, `bootstrap`).
    pub fn from_selector(name: &str, defaults: &ReferenceDefaults) -> Option<Self> {
        let loss = match name {
            "ce" => ReferenceLoss::CrossEntropy,
            "mae" => ReferenceLoss::Mae,
            "gce" => ReferenceLoss::Gce { q: defaults.gce_q },
            "sce" => ReferenceLoss::Sce {
                alpha: defaults.sce_alpha,
                beta: defaults.sce_beta,
                log_zero: defaults.sce_log_zero,
            },
            "ls" => ReferenceLoss::LabelSmooth {
                epsilon: defaults.ls_epsilon,
            },
            "bootstrap" => ReferenceLoss::Bootstrap {
                weight: defaults.bootstrap_weight,
                hard: defaults.bootstrap_hard,
            },
            _ => return None,
        };
        Some(loss)
    }

    pub fn selector(&self) -> &'static str {
        match self {
            ReferenceLoss::CrossEntropy => "ce",
            ReferenceLoss::Mae => "mae",
            ReferenceLoss::Gce { .. } => "gce",
            ReferenceLoss::Sce { .. } => "sce",
            ReferenceLoss::LabelSmooth { .. } => "ls",
            ReferenceLoss::Bootstrap { .. } => "bootstrap",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ReferenceLoss::CrossEntropy | ReferenceLoss::Mae => true,
            ReferenceLoss::Gce { q } => q > 0.0 && q <= 1.0,
            ReferenceLoss::Sce {
                alpha,
                beta,
                log_zero,
            } => alpha > 0.0 && beta > 0.0 && log_zero < 0.0 && log_zero.is_finite(),
            ReferenceLoss::LabelSmooth { epsilon } => (0.0..1.0).contains(&epsilon),
            ReferenceLoss::Bootstrap { weight, .. } => (0.0..=1.0).contains(&weight),
        };
        if ok && self.params_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid reference loss {self}")))
        }
    }

    fn params_finite(&self) -> bool {
        match *self {
            ReferenceLoss::Gce { q } => q.is_finite(),
            ReferenceLoss::Sce { alpha, beta, .. } => alpha.is_finite() && beta.is_finite(),
            _ => true,
        }
    }

    pub fn ref_eval(&self, input: &LossInput) -> Result<f64> {
        self.validate()?;
        input.check_shape()?;
        Ok(self.value(input.predictions(), input.labels()))
    }

    pub fn ref_grad(&self, input: &LossInput) -> Result<Vec<f64>> {
        self.validate()?;
        input.check_shape()?;
        let mut g = vec![0.0; input.num_classes()];
        self.gradient(input.predictions(), input.labels(), &mut g);
        Ok(g)
    }
}

impl fmt::Display for ReferenceLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ReferenceLoss::CrossEntropy => write!(f, "ce"),
            ReferenceLoss::Mae => write!(f, "mae"),
            ReferenceLoss::Gce { q } => write!(f, "gce(q={q})"),
            ReferenceLoss::Sce {
                alpha,
                beta,
                log_zero,
            } => write!(f, "sce(alpha={alpha},beta={beta},A={log_zero})"),
            ReferenceLoss::LabelSmooth { epsilon } => write!(f, "ls(eps={epsilon})"),
            ReferenceLoss::Bootstrap { weight, hard } => {
                write!(f, "bootstrap(weight={weight},{})", if hard { "hard" } else { "soft" })
            }
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// −Σ tᵢ ln ŷᵢ for an arbitrary target t.
fn soft_ce(p: &[f64], target: impl Iterator<Item = f64>) -> f64 {
    -p.iter()
        .zip(target)
        .map(|(&pi, ti)| ti * clamp_prob(pi).ln())
        .sum::<f64>()
}

fn label_index(y: &[f64]) -> usize {
    argmax(y)
}

impl Loss for ReferenceLoss {
    fn value(&self, p: &[f64], y: &[f64]) -> f64 {
        match *self {
            ReferenceLoss::CrossEntropy => soft_ce(p, y.iter().copied()),
            ReferenceLoss::Mae => p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            ReferenceLoss::Gce { q } => {
                let t = label_index(y);
                (1.0 - clamp_prob(p[t]).powf(q)) / q
            }
            ReferenceLoss::Sce {
                alpha,
                beta,
                log_zero,
            } => {
                let ce = soft_ce(p, y.iter().copied());
                let rce: f64 = -p
                    .iter()
                    .zip(y)
                    .map(|(&pi, &yi)| pi * log_or(yi, log_zero))
                    .sum::<f64>();
                alpha * ce + beta * rce
            }
            ReferenceLoss::LabelSmooth { epsilon } => {
                let c = p.len() as f64;
                soft_ce(p, y.iter().map(|&yi| (1.0 - epsilon) * yi + epsilon / c))
            }
            ReferenceLoss::Bootstrap { weight, hard } => {
                if hard {
                    let k = argmax(p);
                    soft_ce(
                        p,
                        y.iter().enumerate().map(|(i, &yi)| {
                            weight * yi + (1.0 - weight) * if i == k { 1.0 } else { 0.0 }
                        }),
                    )
                } else {
                    soft_ce(p, y.iter().zip(p).map(|(&yi, &pi)| weight * yi + (1.0 - weight) * pi))
                }
            }
        }
    }

    fn gradient(&self, p: &[f64], y: &[f64], grad: &mut [f64]) {
        match *self {
            ReferenceLoss::CrossEntropy => {
                for ((g, &pi), &yi) in grad.iter_mut().zip(p).zip(y) {
                    *g = -yi / clamp_prob(pi);
                }
            }
            ReferenceLoss::Mae => {
                for ((g, &pi), &yi) in grad.iter_mut().zip(p).zip(y) {
                    let d = pi - yi;
                    *g = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            ReferenceLoss::Gce { q } => {
                let t = label_index(y);
                grad.fill(0.0);
                grad[t] = -clamp_prob(p[t]).powf(q - 1.0);
            }
            ReferenceLoss::Sce {
                alpha,
                beta,
                log_zero,
            } => {
                for ((g, &pi), &yi) in grad.iter_mut().zip(p).zip(y) {
                    *g = -alpha * yi / clamp_prob(pi) - beta * log_or(yi, log_zero);
                }
            }
            ReferenceLoss::LabelSmooth { epsilon } => {
                let c = p.len() as f64;
                for ((g, &pi), &yi) in grad.iter_mut().zip(p).zip(y) {
                    let t = (1.0 - epsilon) * yi + epsilon / c;
                    *g = -t / clamp_prob(pi);
                }
            }
            ReferenceLoss::Bootstrap { weight, hard } => {
                let k = argmax(p);
                for (i, ((g, &pi), &yi)) in grad.iter_mut().zip(p).zip(y).enumerate() {
                    let pc = clamp_prob(pi);
                    if hard {
                        // the argmax target is piecewise constant in p
                        let z = if i == k { 1.0 } else { 0.0 };
                        *g = -(weight * yi + (1.0 - weight) * z) / pc;
                    } else {
                        let t = weight * yi + (1.0 - weight) * pi;
                        *g = -(1.0 - weight) * pc.ln() - t / pc;
                    }
                }
            }
        }
    }
}

#[inline]
fn log_or(y: f64, log_zero: f64) -> f64 {
    if y > 0.0 {
        y.ln()
    } else {
        log_zero
    }
}
