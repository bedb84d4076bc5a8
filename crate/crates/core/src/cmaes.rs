//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation and combined
//! rank-one / rank-μ covariance updates.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue ratio below which a ridge is added to the covariance.
pub const CONDITION_FLOOR: f64 = 1e-14;
pub const STAGNATION_WINDOW: usize = 10;
pub const STAGNATION_TOL: f64 = 1e-4;
pub const MIN_SPREAD: f64 = 1e-12;
pub const LOG_HEADER: &str = "generation,evals,best_fitness,mean_fitness,sigma,min_eig,max_eig";

pub fn default_lambda(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaConstants {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl CmaConstants {
    pub fn new(n: usize, lambda: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("dimension must be at least 1".into()));
        }
        if lambda < 2 {
            return Err(Error::InvalidParams(format!("lambda must be at least 2, got {lambda}")));
        }
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        })
    }

    /// Generations between eigendecompositions.
    pub fn eigen_interval(&self, n: usize) -> usize {
        (1.0 / (10.0 * n as f64 * (self.c_1 + self.c_mu))).ceil().max(1.0) as usize
    }
}

impl fmt::Display for CmaConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lambda={} mu={} mu_eff={:.6} c_sigma={:.6} d_sigma={:.6} c_c={:.6} c_1={:.6} c_mu={:.6} chi_n={:.6}",
            self.lambda, self.mu, self.mu_eff, self.c_sigma, self.d_sigma, self.c_c, self.c_1, self.c_mu, self.chi_n
        )
    }
}

/// Search distribution N(m, σ²·Cov) plus evolution paths.
///
/// Matrices are row-major `n × n`. `basis` holds eigenvectors of the
/// covariance in its columns and `scales` their square-root eigenvalues, as
/// of generation `eigen_generation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    pub n: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub sigma: f64,
    pub p_sigma: Vec<f64>,
    pub p_c: Vec<f64>,
    pub generation: usize,
    pub evals: usize,
    pub constants: CmaConstants,
    pub basis: Vec<f64>,
    pub scales: Vec<f64>,
    pub eigen_generation: usize,
}

/// Summary of one `tell`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub evals: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub sigma: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Index (into the told candidates) of the best one.
    pub best_index: usize,
}

impl GenerationLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            self.generation, self.evals, self.best_fitness, self.mean_fitness, self.sigma, self.min_eig, self.max_eig
        )
    }
}

pub fn cma_init(n: usize, mean0: &[f64], sigma0: f64, lambda: Option<usize>) -> Result<CmaState> {
    if n == 0 {
        return Err(Error::InvalidParams("dimension must be at least 1".into()));
    }
    if mean0.len() != n {
        return Err(Error::InvalidParams(format!("initial mean has {} entries, expected {n}", mean0.len())));
    }
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(Error::InvalidParams(format!("sigma0 must be positive, got {sigma0}")));
    }
    if mean0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("initial mean must be finite".into()));
    }
    let constants = CmaConstants::new(n, lambda.unwrap_or_else(|| default_lambda(n)))?;
    let eye = identity(n);
    Ok(CmaState {
        n,
        mean: mean0.to_vec(),
        cov: eye.clone(),
        sigma: sigma0,
        p_sigma: vec![0.0; n],
        p_c: vec![0.0; n],
        generation: 0,
        evals: 0,
        constants,
        basis: eye,
        scales: vec![1.0; n],
        eigen_generation: 0,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Replaces non-finite fitness values by (worst finite − 1), or 0 when none
/// is finite.
pub fn sanitize_fitness(fitness: &[f64], maximize: bool) -> Vec<f64> {
    let finite = fitness.iter().copied().filter(|f| f.is_finite());
    let worst = if maximize {
        finite.fold(f64::INFINITY, f64::min)
    } else {
        finite.fold(f64::NEG_INFINITY, f64::max)
    };
    let fill = if !worst.is_finite() {
        0.0
    } else if maximize {
        worst - 1.0
    } else {
        worst + 1.0
    };
    fitness.iter().map(|&f| if f.is_finite() { f } else { fill }).collect()
}

/// Candidate indices from best to worst; equal fitness keeps index order.
pub fn rank(fitness: &[f64], maximize: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        let o = fitness[a].partial_cmp(&fitness[b]).unwrap_or(std::cmp::Ordering::Equal);
        if maximize {
            o.reverse()
        } else {
            o
        }
    });
    order
}

impl CmaState {
    pub fn lambda(&self) -> usize {
        self.constants.lambda
    }

    /// B·D²·Bᵀ from the cached eigendecomposition.
    pub fn sampling_covariance(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| self.basis[i * n + k] * self.scales[k] * self.scales[k] * self.basis[j * n + k])
                    .sum();
            }
        }
        out
    }

    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let sq = self.scales.iter().map(|d| d * d);
        let min = sq.clone().fold(f64::INFINITY, f64::min);
        (min, sq.fold(f64::NEG_INFINITY, f64::max))
    }

    /// Draws λ candidates m + σ·B·D·z.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.check()?;
        let n = self.n;
        let mut out = Vec::with_capacity(self.lambda());
        for _ in 0..self.lambda() {
            let dz: Vec<f64> = self
                .scales
                .iter()
                .map(|d| d * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let y: f64 = (0..n).map(|k| self.basis[i * n + k] * dz[k]).sum();
                    self.mean[i] + self.sigma * y
                })
                .collect();
            out.push(x);
        }
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        let n = self.n;
        let ok = n > 0
            && self.mean.len() == n
            && self.cov.len() == n * n
            && self.basis.len() == n * n
            && self.scales.len() == n
            && self.p_sigma.len() == n
            && self.p_c.len() == n
            && self.constants.weights.len() == self.constants.mu;
        if !ok {
            return Err(Error::Numerical("CMA-ES state has inconsistent dimensions".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || self.scales.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Numerical(format!("CMA-ES distribution is degenerate (sigma={})", self.sigma)));
        }
        Ok(())
    }

    /// Ranks the candidates and updates mean, paths, covariance and step
    /// size. Non-finite fitness values are treated as the worst.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64], maximize: bool) -> Result<GenerationLog> {
        self.check()?;
        let lambda = self.lambda();
        if candidates.len() != lambda || fitness.len() != lambda {
            return Err(Error::InvalidInput(format!(
                "expected {lambda} candidates and fitness values, got {} and {}",
                candidates.len(),
                fitness.len()
            )));
        }
        if let Some(bad) = candidates.iter().position(|c| c.len() != self.n) {
            return Err(Error::InvalidInput(format!("candidate {bad} has wrong dimension")));
        }
        let fitness = sanitize_fitness(fitness, maximize);
        let order = rank(&fitness, maximize);
        let n = self.n;
        let k = self.constants.clone();

        let ys: Vec<Vec<f64>> = order[..k.mu]
            .iter()
            .map(|&i| (0..n).map(|j| (candidates[i][j] - self.mean[j]) / self.sigma).collect())
            .collect();
        let mut new_mean = vec![0.0; n];
        for (w, &i) in k.weights.iter().zip(&order[..k.mu]) {
            for j in 0..n {
                new_mean[j] += w * candidates[i][j];
            }
        }
        let y_w: Vec<f64> = (0..n).map(|j| (new_mean[j] - self.mean[j]) / self.sigma).collect();

        // C^{-1/2}·y_w = B·D⁻¹·Bᵀ·y_w
        let bty: Vec<f64> = (0..n)
            .map(|c| (0..n).map(|r| self.basis[r * n + c] * y_w[r]).sum::<f64>() / self.scales[c])
            .collect();
        let inv_sqrt_y: Vec<f64> = (0..n).map(|r| (0..n).map(|c| self.basis[r * n + c] * bty[c]).sum()).collect();

        let cs = (k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff).sqrt();
        for j in 0..n {
            self.p_sigma[j] = (1.0 - k.c_sigma) * self.p_sigma[j] + cs * inv_sqrt_y[j];
        }
        let ps_norm = self.p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gen = self.generation + 1;
        let denom = (1.0 - (1.0 - k.c_sigma).powi(2 * gen as i32)).sqrt();
        let h_sigma = ps_norm / denom < (1.4 + 2.0 / (n as f64 + 1.0)) * k.chi_n;
        let cc = (k.c_c * (2.0 - k.c_c) * k.mu_eff).sqrt();
        for j in 0..n {
            self.p_c[j] = (1.0 - k.c_c) * self.p_c[j] + if h_sigma { cc * y_w[j] } else { 0.0 };
        }
        let delta = if h_sigma { 0.0 } else { k.c_c * (2.0 - k.c_c) };
        let decay = 1.0 - k.c_1 - k.c_mu + k.c_1 * delta;
        for r in 0..n {
            for c in r..n {
                let rank_mu: f64 = k.weights.iter().zip(&ys).map(|(w, y)| w * y[r] * y[c]).sum();
                let v = decay * self.cov[r * n + c] + k.c_1 * self.p_c[r] * self.p_c[c] + k.c_mu * rank_mu;
                self.cov[r * n + c] = v;
                self.cov[c * n + r] = v;
            }
        }
        self.sigma *= ((k.c_sigma / k.d_sigma) * (ps_norm / k.chi_n - 1.0)).exp();
        self.mean = new_mean;
        self.generation = gen;
        self.evals += lambda;
        if gen - self.eigen_generation >= k.eigen_interval(n) {
            self.refresh_eigen()?;
        }

        let (min_eig, max_eig) = self.eigenvalue_range();
        Ok(GenerationLog {
            generation: gen,
            evals: self.evals,
            best_fitness: fitness[order[0]],
            mean_fitness: fitness.iter().sum::<f64>() / lambda as f64,
            sigma: self.sigma,
            min_eig,
            max_eig,
            best_index: order[0],
        })
    }

    /// Recomputes the eigendecomposition, adding a ridge first if the
    /// covariance is close to singular.
    pub fn refresh_eigen(&mut self) -> Result<()> {
        let n = self.n;
        if self.cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariance has non-finite entries".into()));
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &self.cov));
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(max > 0.0 && max.is_finite()) {
            return Err(Error::Numerical(format!("covariance lost positive definiteness (max eigenvalue {max})")));
        }
        if min < CONDITION_FLOOR * max {
            let ridge = 10.0 * CONDITION_FLOOR * max - min;
            for i in 0..n {
                self.cov[i * n + i] += ridge;
            }
            values.iter_mut().for_each(|v| *v += ridge);
        }
        for r in 0..n {
            for c in 0..n {
                self.basis[r * n + c] = eig.eigenvectors[(r, c)];
            }
        }
        self.scales = values.iter().map(|v| v.sqrt()).collect();
        self.eigen_generation = self.generation;
        Ok(())
    }

    /// σ·max(diag Cov)^½.
    pub fn spread(&self) -> f64 {
        let max_diag = (0..self.n).map(|i| self.cov[i * self.n + i]).fold(0.0, f64::max);
        self.sigma * max_diag.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    Stagnation,
    Collapse,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxGenerations => "max_generations",
            StopReason::Stagnation => "stagnation",
            StopReason::Collapse => "collapse",
        })
    }
}

/// Stopping rules. `best_history` is the best fitness of each generation so
/// far, oriented so that larger is better.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub max_generations: usize,
    pub stagnation: bool,
}

impl Termination {
    pub fn check(&self, state: &CmaState, best_history: &[f64]) -> Option<StopReason> {
        if state.generation >= self.max_generations {
            return Some(StopReason::MaxGenerations);
        }
        if state.spread() < MIN_SPREAD {
            return Some(StopReason::Collapse);
        }
        if self.stagnation && stagnated(best_history) {
            return Some(StopReason::Stagnation);
        }
        None
    }
}

/// True when the running best improved by less than [`STAGNATION_TOL`] over
/// the last [`STAGNATION_WINDOW`] generations.
pub fn stagnated(best_history: &[f64]) -> bool {
    let len = best_history.len();
    if len <= STAGNATION_WINDOW {
        return false;
    }
    let best_before = best_history[..len - STAGNATION_WINDOW].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_now = best_history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best_now - best_before < STAGNATION_TOL
}
