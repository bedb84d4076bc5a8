//! Loss search: CMA-ES proposes Taylor loss parameters, each candidate is
//! scored by training networks with it on noisy labels and measuring clean
//! validation accuracy.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CmaSettings, InnerLoop, LossSettings, MetaConfig, Mode};

use crate::cmaes::{cma_init, CmaState, GenerationLog, StopReason, Termination, LOG_HEADER};
use crate::data::{split, Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::nn::{train, Network, NetworkSpec};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::taylor::{LearnedLoss, NormalizedLoss, TaylorLossParams};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const FITNESS_HEADER: &str = "candidate,arch,dataset,accuracy,diverged";

/// One inner-loop training run.
#[derive(Clone, Debug, PartialEq)]
pub struct JobResult {
    pub arch: String,
    pub dataset: String,
    pub accuracy: f64,
    pub diverged: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitnessRecord {
    pub candidate: usize,
    pub jobs: Vec<JobResult>,
    /// The candidate's loss had a degenerate range and was not trained.
    pub degenerate: bool,
    pub score: f64,
}

/// Mean accuracy with diverged jobs counted as 0.
pub fn aggregate_score(jobs: &[JobResult]) -> f64 {
    if jobs.is_empty() {
        return 0.0;
    }
    jobs.iter().map(|j| if j.diverged { 0.0 } else { j.accuracy }).sum::<f64>() / jobs.len() as f64
}

/// Best candidate of a generation, kept in a form that round-trips exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Champion {
    pub generation: usize,
    pub candidate: usize,
    pub score: f64,
    pub flat: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub eta: f64,
}

impl Champion {
    pub fn loss(&self, order: usize) -> Result<NormalizedLoss> {
        NormalizedLoss::new(TaylorLossParams::from_flat(order, &self.flat)?, self.f_min, self.f_max, self.eta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub log: GenerationLog,
    /// Score of the generation's champion.
    pub best_score: f64,
    /// Best score seen up to and including this generation.
    pub best_ever: f64,
}

#[derive(Clone, Debug)]
pub struct GenerationResult {
    pub log: GenerationLog,
    pub records: Vec<FitnessRecord>,
    pub champion: Option<Champion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: MetaConfig,
    state: CmaState,
    best: Option<Champion>,
    history: Vec<GenerationSummary>,
}

#[derive(Clone, Debug)]
pub struct MetaOutcome {
    pub best: LearnedLoss,
    pub best_score: Option<f64>,
    pub history: Vec<GenerationSummary>,
    pub stop: StopReason,
    pub warnings: Vec<String>,
}

struct Task {
    name: String,
    source: Dataset,
    split: DatasetSplit,
}

/// Everything a generation needs that does not change between generations.
pub struct MetaContext {
    cfg: MetaConfig,
    tasks: Vec<Task>,
    /// `specs[a][d]`: architecture `a` built for dataset `d`.
    specs: Vec<Vec<NetworkSpec>>,
    range_classes: usize,
    pool: rayon::ThreadPool,
}

impl MetaContext {
    /// Loads every dataset and draws one noisy split per dataset for the
    /// whole run.
    pub fn new(cfg: MetaConfig) -> Result<Self> {
        cfg.validate()?;
        let mut tasks = Vec::with_capacity(cfg.datasets.len());
        for (d, sel) in cfg.datasets.iter().enumerate() {
            let source = sel.load()?;
            let noise = cfg.noise.bind(source.num_classes())?;
            let seed = derive_seed(cfg.seed, stream::SPLIT, d as u64);
            let split = split(&source, cfg.val_fraction, noise.as_ref(), seed)?;
            tasks.push(Task {
                name: sel.to_string(),
                source,
                split,
            });
        }
        let specs = cfg
            .architectures
            .iter()
            .map(|a| tasks.iter().map(|t| a.build(t.source.shape(), t.source.num_classes())).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let range_classes = cfg
            .loss
            .range_classes
            .unwrap_or_else(|| tasks.iter().map(|t| t.source.num_classes()).max().unwrap_or(2));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            cfg,
            tasks,
            specs,
            range_classes,
            pool,
        })
    }

    pub fn config(&self) -> &MetaConfig {
        &self.cfg
    }

    pub fn splits(&self) -> impl Iterator<Item = &DatasetSplit> {
        self.tasks.iter().map(|t| &t.split)
    }

    /// Fails if any validation label differs from its source label.
    pub fn verify_validation_labels(&self) -> Result<()> {
        for t in &self.tasks {
            if t.split.val_checksum() != t.split.source_val_checksum(&t.source) {
                return Err(Error::Numerical(format!("validation labels of {} were modified", t.name)));
            }
        }
        Ok(())
    }

    /// Decodes a flat vector and normalizes it; `None` for a degenerate or
    /// unusable candidate.
    pub fn decode(&self, flat: &[f64], range_seed: u64) -> Result<Option<NormalizedLoss>> {
        let params = TaylorLossParams::from_flat(self.cfg.loss.order, flat)?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let fitted = NormalizedLoss::fit(
            params,
            self.range_classes,
            self.cfg.loss.range_samples,
            range_seed,
            self.cfg.loss.eta,
        );
        Ok(fitted.ok().flatten())
    }

    fn run_job(&self, loss: &NormalizedLoss, arch: usize, task: usize, gen_seed: u64) -> JobResult {
        let start = Instant::now();
        let init_seed = derive_seed(gen_seed, stream::INIT, arch as u64);
        let shuffle_seed = derive_seed(gen_seed, stream::SHUFFLE, (arch * self.tasks.len() + task) as u64);
        let cfg = self.cfg.train.with_seed(shuffle_seed);
        let outcome = Network::init(self.specs[arch][task].clone(), init_seed)
            .and_then(|mut net| train(&mut net, loss, &self.tasks[task].split, &cfg));
        let (accuracy, diverged) = match outcome {
            Ok(r) if !r.diverged() => (r.val_accuracy, false),
            _ => (0.0, true),
        };
        JobResult {
            arch: self.cfg.architectures[arch].to_string(),
            dataset: self.tasks[task].name.clone(),
            accuracy,
            diverged,
            wall_seconds: start.elapsed().as_secs_f64(),
        }
    }

    /// One ask → evaluate → tell cycle.
    pub fn run_generation(&self, state: &mut CmaState) -> Result<GenerationResult> {
        self.verify_validation_labels()?;
        let generation = state.generation + 1;
        let gen_seed = derive_seed(self.cfg.seed, stream::GENERATION, generation as u64);
        let candidates = state.ask(&mut rng_from_seed(derive_seed(gen_seed, stream::ASK, 0)))?;

        let losses: Vec<Option<NormalizedLoss>> = self.pool.install(|| {
            candidates
                .par_iter()
                .enumerate()
                .map(|(i, x)| self.decode(x, derive_seed(gen_seed, stream::RANGE, i as u64)))
                .collect::<Result<Vec<_>>>()
        })?;

        let (na, nd) = (self.cfg.architectures.len(), self.tasks.len());
        let jobs: Vec<(usize, usize, usize)> = losses
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_some())
            .flat_map(|(i, _)| (0..na).flat_map(move |a| (0..nd).map(move |d| (i, a, d))))
            .collect();
        let results: Vec<JobResult> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(i, a, d)| self.run_job(losses[i].as_ref().unwrap(), a, d, gen_seed))
                .collect()
        });

        let mut results = results.into_iter();
        let records: Vec<FitnessRecord> = losses
            .iter()
            .enumerate()
            .map(|(i, loss)| {
                if loss.is_some() {
                    let jobs: Vec<JobResult> = results.by_ref().take(na * nd).collect();
                    FitnessRecord {
                        candidate: i,
                        score: aggregate_score(&jobs),
                        jobs,
                        degenerate: false,
                    }
                } else {
                    let jobs = (0..na)
                        .flat_map(|a| (0..nd).map(move |d| (a, d)))
                        .map(|(a, d)| JobResult {
                            arch: self.cfg.architectures[a].to_string(),
                            dataset: self.tasks[d].name.clone(),
                            accuracy: 0.0,
                            diverged: false,
                            wall_seconds: 0.0,
                        })
                        .collect();
                    FitnessRecord {
                        candidate: i,
                        jobs,
                        degenerate: true,
                        score: 0.0,
                    }
                }
            })
            .collect();

        let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
        let log = state.tell(&candidates, &scores, true)?;
        let champion = losses[log.best_index].as_ref().map(|l| Champion {
            generation,
            candidate: log.best_index,
            score: scores[log.best_index],
            flat: candidates[log.best_index].clone(),
            f_min: l.f_min(),
            f_max: l.f_max(),
            eta: l.eta(),
        });
        Ok(GenerationResult { log, records, champion })
    }

    /// Normalized loss at the current search mean, or the raw polynomial
    /// when its range is degenerate.
    pub fn loss_at_mean(&self, state: &CmaState) -> Result<LearnedLoss> {
        let seed = derive_seed(self.cfg.seed, stream::RANGE, u64::MAX);
        Ok(match self.decode(&state.mean, seed)? {
            Some(l) => LearnedLoss::Normalized(l),
            None => LearnedLoss::Raw(TaylorLossParams::from_flat(self.cfg.loss.order, &state.mean)?),
        })
    }
}

pub fn fitness_csv(records: &[FitnessRecord]) -> String {
    let mut out = format!("{FITNESS_HEADER}\n");
    for r in records {
        for j in &r.jobs {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{}",
                r.candidate, j.arch, j.dataset, j.accuracy, j.diverged as u8
            );
        }
    }
    out
}

pub fn cma_log_csv(history: &[GenerationSummary]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for h in history {
        out.push_str(&h.log.csv_row());
        out.push('\n');
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join(format!("checkpoint_gen_{generation}.json"))
}

/// Highest generation with a checkpoint in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<usize>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut best = None;
    for entry in entries {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let k = name
            .to_str()
            .and_then(|n| n.strip_prefix("checkpoint_gen_"))
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(k) = k {
            best = best.max(Some(k));
        }
    }
    Ok(best)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported checkpoint version {:?}, expected {CHECKPOINT_VERSION}",
            path.display(),
            version
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

/// Runs the search into `dir`. With `resume`, continues from the newest
/// checkpoint there (its config must match up to generation budget and
/// worker count); the continued run is identical to an uninterrupted one.
pub fn meta_train(cfg: &MetaConfig, dir: &Path, resume: bool) -> Result<MetaOutcome> {
    let warnings = cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ctx = MetaContext::new(cfg.clone())?;

    let (mut state, mut best, mut history) = match latest_checkpoint(dir)?.filter(|_| resume) {
        Some(k) => {
            let cp = load_checkpoint(&checkpoint_path(dir, k))?;
            if !cfg.resumable_from(&cp.config) {
                return Err(Error::Checkpoint(format!(
                    "checkpoint in {} was written by a different config",
                    dir.display()
                )));
            }
            (cp.state, cp.best, cp.history)
        }
        None => {
            let dim = cfg.flat_dimension();
            (cma_init(dim, &cfg.mean0(), cfg.cma.sigma0, cfg.cma.lambda)?, None, Vec::new())
        }
    };
    write(dir.join("config.json"), &cfg.to_json()?)?;
    write(dir.join("cma_log.csv"), &cma_log_csv(&history))?;

    let stop_rule = Termination {
        max_generations: cfg.cma.max_generations,
        stagnation: cfg.cma.stagnation,
    };
    let stop = loop {
        let per_generation: Vec<f64> = history.iter().map(|h| h.best_score).collect();
        if let Some(reason) = stop_rule.check(&state, &per_generation) {
            break reason;
        }
        let result = ctx.run_generation(&mut state)?;
        let k = result.log.generation;
        if let Some(c) = result.champion {
            if best.as_ref().is_none_or(|b: &Champion| c.score > b.score) {
                best = Some(c);
            }
        }
        history.push(GenerationSummary {
            best_score: result.log.best_fitness,
            best_ever: best.as_ref().map_or(0.0, |b| b.score),
            log: result.log,
        });
        write(dir.join(format!("fitness_gen_{k}.csv")), &fitness_csv(&result.records))?;
        write(dir.join("cma_log.csv"), &cma_log_csv(&history))?;
        let cp = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            state: state.clone(),
            best: best.clone(),
            history: history.clone(),
        };
        let mut text = serde_json::to_string_pretty(&cp)?;
        text.push('\n');
        write(checkpoint_path(dir, k), &text)?;
        best_loss(&ctx, &state, best.as_ref())?.save(&dir.join("best_loss.json"))?;
    };

    let loss = best_loss(&ctx, &state, best.as_ref())?;
    loss.save(&dir.join("best_loss.json"))?;
    Ok(MetaOutcome {
        best: loss,
        best_score: best.map(|b| b.score),
        history,
        stop,
        warnings,
    })
}

fn best_loss(ctx: &MetaContext, state: &CmaState, best: Option<&Champion>) -> Result<LearnedLoss> {
    match best {
        Some(c) => Ok(LearnedLoss::Normalized(c.loss(ctx.cfg.loss.order)?)),
        None => ctx.loss_at_mean(state),
    }
}
