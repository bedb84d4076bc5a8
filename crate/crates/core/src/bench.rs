//! Deploying losses on tasks, benchmark grids with average ranks, loss
//! surfaces and noise-matrix dumps.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, DatasetSelector, DatasetSplit, DEFAULT_VAL_FRACTION};
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::meta::InnerLoop;
use crate::nn::{train, Architecture, Network, TrainReport};
use crate::noise::{build_transition, NoiseKind, NoiseSetting, NoiseSpec, TransitionMatrix};
use crate::reference::{ReferenceDefaults, ReferenceLoss};
use crate::rng::{derive_seed, stream};
use crate::taylor::LearnedLoss;

pub const RESULTS_HEADER: &str = "arch,dataset,noise,loss,seed,accuracy,diverged";
pub const SUMMARY_HEADER: &str = "arch,dataset,noise,loss,mean,std,rank";
pub const RANKS_HEADER: &str = "loss,average_rank";
pub const SURFACE_HEADER: &str = "yhat,y,loss";

/// A reference loss by name or a learned loss read from a file.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedLoss {
    Reference(ReferenceLoss),
    Learned(LearnedLoss),
}

impl Loss for ResolvedLoss {
    fn value(&self, predictions: &[f64], labels: &[f64]) -> f64 {
        match self {
            ResolvedLoss::Reference(l) => l.value(predictions, labels),
            ResolvedLoss::Learned(l) => l.value(predictions, labels),
        }
    }

    fn gradient(&self, predictions: &[f64], labels: &[f64], grad: &mut [f64]) {
        match self {
            ResolvedLoss::Reference(l) => l.gradient(predictions, labels, grad),
            ResolvedLoss::Learned(l) => l.gradient(predictions, labels, grad),
        }
    }
}

/// `ce`, `mae`, `gce`, `sce`, `ls`, `bootstrap`, or a path to a loss file.
pub fn resolve_loss(selector: &str, defaults: &ReferenceDefaults) -> Result<ResolvedLoss> {
    if let Some(l) = ReferenceLoss::from_selector(selector, defaults) {
        l.validate()?;
        return Ok(ResolvedLoss::Reference(l));
    }
    let path = Path::new(selector);
    if !path.exists() {
        return Err(Error::Config(format!(
            "unknown loss `{selector}`: not a reference loss (ce, mae, gce, sce, ls, bootstrap) and no such file"
        )));
    }
    LearnedLoss::load(path).map(ResolvedLoss::Learned)
}

/// One training run of a loss on a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub arch: Architecture,
    pub dataset: DatasetSelector,
    pub noise: NoiseSetting,
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {} with noise {}", self.arch, self.dataset, self.noise)
    }
}

/// Split, initialization and shuffle seeds for one deployment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeploySeeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl DeploySeeds {
    pub fn derive(parent: u64, index: u64) -> Self {
        Self {
            split: derive_seed(parent, stream::SPLIT, index),
            init: derive_seed(parent, stream::INIT, index),
            shuffle: derive_seed(parent, stream::SHUFFLE, index),
        }
    }
}

pub fn prepare_split(task: &TaskSpec, val_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    let ds = task.dataset.load()?;
    let noise = task.noise.bind(ds.num_classes())?;
    split(&ds, val_fraction, noise.as_ref(), seed)
}

/// Trains a fresh network on an already prepared split.
pub fn deploy_on_split<L: Loss + ?Sized>(
    loss: &L,
    arch: &Architecture,
    data: &DatasetSplit,
    train_cfg: &InnerLoop,
    seeds: DeploySeeds,
) -> Result<TrainReport> {
    let spec = arch.build(&data.shape, data.num_classes)?;
    let mut net = Network::init(spec, seeds.init)?;
    train(&mut net, loss, data, &train_cfg.with_seed(seeds.shuffle))
}

/// Loads the dataset, splits it and trains from scratch.
pub fn deploy<L: Loss + ?Sized>(
    loss: &L,
    task: &TaskSpec,
    val_fraction: f64,
    train_cfg: &InnerLoop,
    seeds: DeploySeeds,
) -> Result<TrainReport> {
    let data = prepare_split(task, val_fraction, seeds.split)?;
    deploy_on_split(loss, &task.arch, &data, train_cfg, seeds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkGrid {
    pub cells: Vec<TaskSpec>,
    pub losses: Vec<String>,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub train: InnerLoop,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub reference: ReferenceDefaults,
}

fn one() -> usize {
    1
}

fn default_val_fraction() -> f64 {
    DEFAULT_VAL_FRACTION
}

impl BenchmarkGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    /// Relative loss-file paths are resolved against `base`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for sel in &mut grid.losses {
            if ReferenceLoss::from_selector(sel, &grid.reference).is_none() && Path::new(sel.as_str()).is_relative() {
                let joined: PathBuf = base.join(&*sel);
                if joined.exists() {
                    *sel = joined.to_string_lossy().into_owned();
                }
            }
        }
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("`cells` must not be empty".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::Config("`losses` must not be empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("`seeds` must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("`val_fraction` must be in (0,1), got {}", self.val_fraction)));
        }
        self.train.with_seed(0).validate().map_err(|e| Error::Config(format!("`train`: {e}")))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub arch: String,
    pub dataset: String,
    pub noise: String,
    pub loss: String,
    pub seed: usize,
    pub accuracy: f64,
    pub diverged: bool,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{}",
            r.arch, r.dataset, r.noise, r.loss, r.seed, r.accuracy, r.diverged as u8
        );
    }
    out
}

/// Parses a `results.csv` written by [`results_csv`].
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::InvalidInput("results file has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidInput(format!("malformed results row `{line}`"));
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(ResultRow {
                arch: f[0].into(),
                dataset: f[1].into(),
                noise: f[2].into(),
                loss: f[3].into(),
                seed: f[4].parse().map_err(|_| bad())?,
                accuracy: f[5].parse().map_err(|_| bad())?,
                diverged: match f[6] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad()),
                },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub rank: f64,
}

/// Per-cell mean ± std and mid-ranks (1 = best mean accuracy), plus the
/// average rank of every loss across cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    /// `(arch, dataset, noise)` in first-seen order.
    pub cells: Vec<(String, String, String)>,
    /// Losses in first-seen order.
    pub losses: Vec<String>,
    /// `stats[cell][loss]`.
    pub stats: Vec<Vec<CellStats>>,
    pub average_rank: Vec<f64>,
}

/// Ranks with ties sharing the mean of the positions they span; larger
/// values rank first.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

impl RankTable {
    pub fn from_rows(rows: &[ResultRow]) -> Result<Self> {
        let mut cells: Vec<(String, String, String)> = Vec::new();
        let mut losses: Vec<String> = Vec::new();
        for r in rows {
            let cell = (r.arch.clone(), r.dataset.clone(), r.noise.clone());
            if !cells.contains(&cell) {
                cells.push(cell);
            }
            if !losses.contains(&r.loss) {
                losses.push(r.loss.clone());
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidInput("no results to rank".into()));
        }
        let mut stats = Vec::with_capacity(cells.len());
        for cell in &cells {
            let mut per_loss = Vec::with_capacity(losses.len());
            for loss in &losses {
                let mut acc: Vec<f64> = rows
                    .iter()
                    .filter(|r| (&r.arch, &r.dataset, &r.noise) == (&cell.0, &cell.1, &cell.2) && &r.loss == loss)
                    .map(|r| r.accuracy)
                    .collect();
                if acc.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "loss {loss} has no results for cell {}/{}/{}",
                        cell.0, cell.1, cell.2
                    )));
                }
                // summation order fixed so equal multisets give equal means
                acc.sort_by(|a, b| a.total_cmp(b));
                let n = acc.len() as f64;
                let mean = acc.iter().sum::<f64>() / n;
                let std = if acc.len() > 1 {
                    (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                per_loss.push(CellStats { mean, std, rank: 0.0 });
            }
            let means: Vec<f64> = per_loss.iter().map(|s| s.mean).collect();
            for (s, r) in per_loss.iter_mut().zip(mid_ranks(&means)) {
                s.rank = r;
            }
            stats.push(per_loss);
        }
        let average_rank = (0..losses.len())
            .map(|l| stats.iter().map(|cell| cell[l].rank).sum::<f64>() / cells.len() as f64)
            .collect();
        Ok(Self {
            cells,
            losses,
            stats,
            average_rank,
        })
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for (cell, stats) in self.cells.iter().zip(&self.stats) {
            for (loss, s) in self.losses.iter().zip(stats) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{}",
                    cell.0, cell.1, cell.2, loss, s.mean, s.std, s.rank
                );
            }
        }
        out
    }

    pub fn ranks_csv(&self) -> String {
        let mut out = format!("{RANKS_HEADER}\n");
        for (loss, r) in self.losses.iter().zip(&self.average_rank) {
            let _ = writeln!(out, "{loss},{r:.6}");
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<ResultRow>,
    pub table: RankTable,
}

/// Runs every (cell, loss, seed) and writes `results.csv`, `summary.csv`
/// and `ranks.csv` into `out_dir`. Every loss sees the same split,
/// initialization and shuffle order for a given (cell, seed).
pub fn run_benchmark(grid: &BenchmarkGrid, out_dir: &Path) -> Result<BenchmarkReport> {
    grid.validate()?;
    let losses = grid
        .losses
        .iter()
        .map(|s| resolve_loss(s, &grid.reference))
        .collect::<Result<Vec<_>>>()?;
    let splits = grid
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let cell_seed = derive_seed(grid.seed, stream::CELL, c as u64);
            (0..grid.seeds)
                .map(|s| prepare_split(cell, grid.val_fraction, DeploySeeds::derive(cell_seed, s as u64).split))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..grid.cells.len())
        .flat_map(|c| (0..losses.len()).flat_map(move |l| (0..grid.seeds).map(move |s| (c, l, s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<ResultRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, l, s)| {
                let cell = &grid.cells[c];
                let seeds = DeploySeeds::derive(derive_seed(grid.seed, stream::CELL, c as u64), s as u64);
                let outcome = deploy_on_split(&losses[l], &cell.arch, &splits[c][s], &grid.train, seeds);
                let (accuracy, diverged) = match outcome {
                    Ok(r) if !r.diverged() => (r.val_accuracy, false),
                    _ => (0.0, true),
                };
                ResultRow {
                    arch: cell.arch.to_string(),
                    dataset: cell.dataset.to_string(),
                    noise: cell.noise.to_string(),
                    loss: grid.losses[l].clone(),
                    seed: s,
                    accuracy,
                    diverged,
                }
            })
            .collect()
    });
    // rank what is written, so the table is reproducible from results.csv
    let table = RankTable::from_rows(&parse_results_csv(&results_csv(&rows))?)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, text) in [
        ("results.csv", results_csv(&rows)),
        ("summary.csv", table.summary_csv()),
        ("ranks.csv", table.ranks_csv()),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(BenchmarkReport { rows, table })
}

/// Per-example loss on the binary view: predictions (ŷ, 1 − ŷ) and label
/// y = 1 for class 0, y = 0 for class 1. `resolution` ≥ 2 grid points span
/// [0, 1] inclusive.
pub fn loss_surface<L: Loss + ?Sized>(loss: &L, resolution: usize) -> Result<Vec<(f64, u8, f64)>> {
    if resolution < 2 {
        return Err(Error::InvalidInput(format!("resolution must be at least 2, got {resolution}")));
    }
    let mut out = Vec::with_capacity(2 * resolution);
    for y in [0u8, 1] {
        let labels = if y == 1 { [1.0, 0.0] } else { [0.0, 1.0] };
        for i in 0..resolution {
            let yhat = i as f64 / (resolution - 1) as f64;
            out.push((yhat, y, loss.value(&[yhat, 1.0 - yhat], &labels)));
        }
    }
    Ok(out)
}

pub fn surface_csv(points: &[(f64, u8, f64)]) -> String {
    let mut out = format!("{SURFACE_HEADER}\n");
    for (yhat, y, l) in points {
        let _ = writeln!(out, "{yhat:.6},{y},{l:.10}");
    }
    out
}

/// Transition matrix for a noise setting; `pairing` only applies to
/// pair-flip noise.
pub fn noise_matrix(setting: NoiseSetting, num_classes: usize, pairing: Option<Vec<usize>>) -> Result<TransitionMatrix> {
    let spec: Option<NoiseSpec> = setting.bind(num_classes)?;
    let spec = match (spec, pairing) {
        (None, _) => return Ok(TransitionMatrix::identity(num_classes)),
        (Some(s), Some(p)) if s.kind() == NoiseKind::Asymmetric => s.with_pairing(p)?,
        (Some(_), Some(_)) => return Err(Error::Config("a pairing only applies to asym noise".into())),
        (Some(s), None) => s,
    };
    Ok(build_transition(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cell: &str, loss: &str, seed: usize, accuracy: f64) -> ResultRow {
        ResultRow {
            arch: "mlp2".into(),
            dataset: cell.into(),
            noise: "none".into(),
            loss: loss.into(),
            seed,
            accuracy,
            diverged: false,
        }
    }

    #[test]
    fn dominant_loss_ranks_first() {
        let rows = vec![
            row("a", "x", 0, 0.9),
            row("a", "y", 0, 0.8),
            row("b", "x", 0, 0.7),
            row("b", "y", 0, 0.6),
        ];
        let t = RankTable::from_rows(&rows).unwrap();
        assert_eq!(t.stats[0][0].rank, 1.0);
        assert_eq!(t.stats[1][1].rank, 2.0);
        assert_eq!(t.average_rank, vec![1.0, 2.0]);
    }

    #[test]
    fn ties_share_mid_rank() {
        assert_eq!(mid_ranks(&[0.5, 0.5]), vec![1.5, 1.5]);
        assert_eq!(mid_ranks(&[0.1, 0.9, 0.5, 0.5]), vec![4.0, 1.0, 2.5, 2.5]);
    }

    #[test]
    fn ranks_invariant_under_monotone_maps() {
        let v = [0.31, 0.72, 0.72, 0.05, 0.5];
        let w: Vec<f64> = v.iter().map(|x: &f64| x.powi(3) * 10.0 - 1.0).collect();
        assert_eq!(mid_ranks(&v), mid_ranks(&w));
    }

    #[test]
    fn std_is_sample_std() {
        let rows = vec![row("a", "x", 0, 0.5), row("a", "x", 1, 0.7)];
        let t = RankTable::from_rows(&rows).unwrap();
        assert!((t.stats[0][0].mean - 0.6).abs() < 1e-15);
        assert!((t.stats[0][0].std - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn results_csv_round_trips() {
        let rows = vec![row("a", "x", 0, 0.5), row("a", "y", 3, 0.25)];
        assert_eq!(parse_results_csv(&results_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn surface_reference_points() {
        let ce = ReferenceLoss::CrossEntropy;
        let s = loss_surface(&ce, 3).unwrap();
        let mid = s.iter().find(|(yh, y, _)| *yh == 0.5 && *y == 1).unwrap();
        assert!((mid.2 - std::f64::consts::LN_2).abs() < 1e-12);
        let mae = ReferenceLoss::Mae;
        let s = loss_surface(&mae, 11).unwrap();
        assert_eq!(s.iter().find(|(yh, y, _)| *yh == 1.0 && *y == 1).unwrap().2, 0.0);
        assert!(loss_surface(&mae, 1).is_err());
    }

    #[test]
    fn unknown_loss_selector_is_config_error() {
        let err = resolve_loss("not-a-loss", &ReferenceDefaults::default()).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn noise_matrix_dump() {
        let t = noise_matrix(NoiseSetting::Symmetric(0.4), 6, None).unwrap();
        assert_eq!(t.get(0, 0), 0.6);
        let t = noise_matrix(NoiseSetting::Asymmetric(0.3), 3, Some(vec![2, 0, 1])).unwrap();
        assert!((t.get(0, 2) - 0.3).abs() < 1e-15);
        assert!(noise_matrix(NoiseSetting::Symmetric(0.3), 3, Some(vec![2, 0, 1])).is_err());
        assert_eq!(noise_matrix(NoiseSetting::None, 4, None).unwrap(), TransitionMatrix::identity(4));
    }
}
