use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisyloss::bench::{
    deploy, loss_surface, noise_matrix, resolve_loss, run_benchmark, surface_csv, BenchmarkGrid, DeploySeeds, TaskSpec,
};
use noisyloss::data::{DatasetSelector, DEFAULT_VAL_FRACTION};
use noisyloss::meta::{meta_train, InnerLoop, MetaConfig};
use noisyloss::nn::{write_curve_csv, Architecture};
use noisyloss::noise::NoiseSetting;
use noisyloss::reference::ReferenceDefaults;
use noisyloss::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "noisyloss", version, about = "Search, deploy and benchmark losses for noisy-label classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a Taylor loss with CMA-ES.
    MetaTrain {
        /// JSON meta-training config.
        #[arg(long)]
        config: PathBuf,
        /// Run directory for logs, checkpoints and best_loss.json.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the newest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Train a network from scratch with a loss and report clean accuracy.
    Train(TrainArgs),
    /// Run a benchmark grid and compute average ranks.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results.csv, summary.csv and ranks.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the binary per-example loss surface as `yhat,y,loss` CSV.
    InspectLoss {
        /// Reference loss name or loss file.
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a label-noise transition matrix as CSV.
    MakeNoiseMatrix {
        /// `none`, `sym:<r>` or `asym:<r>`.
        #[arg(long)]
        noise: String,
        #[arg(long)]
        classes: usize,
        /// JSON integer array of pair-flip targets (class i flips to entry i).
        #[arg(long)]
        pairing: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Reference loss name (ce, mae, gce, sce, ls, bootstrap) or loss file.
    #[arg(long)]
    loss: String,
    /// Dataset selector, e.g. `blobs:3:500:0.5` or `rings:3:500`.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "mlp2")]
    arch: String,
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning-curve CSV (`epoch,train_loss,val_accuracy`).
    #[arg(long)]
    curve: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME },
            message: e.to_string(),
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn parse<T>(what: &str, text: &str) -> Result<T, Failure>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("bad {what} `{text}`: {e}"),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn cmd_meta_train(config: &Path, out: &Path, resume: bool) -> Result<(), Failure> {
    let cfg = MetaConfig::load(config).map_err(config_failure)?;
    let outcome = meta_train(&cfg, out, resume)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match outcome.best_score {
        Some(s) => eprintln!(
            "stopped after {} generations ({}), best score {s:.4}",
            outcome.history.len(),
            outcome.stop
        ),
        None => eprintln!("stopped after {} generations ({}), no champion", outcome.history.len(), outcome.stop),
    }
    eprintln!("wrote {}", out.join("best_loss.json").display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), Failure> {
    let loss = resolve_loss(&a.loss, &ReferenceDefaults::default()).map_err(config_failure)?;
    let task = TaskSpec {
        arch: parse::<Architecture>("architecture", &a.arch)?,
        dataset: parse::<DatasetSelector>("dataset", &a.dataset)?,
        noise: parse::<NoiseSetting>("noise", &a.noise)?,
    };
    let cfg = InnerLoop {
        learning_rate: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        epochs: a.epochs,
    };
    cfg.with_seed(0).validate().map_err(config_failure)?;
    let report = deploy(&loss, &task, a.val_fraction, &cfg, DeploySeeds::derive(a.seed, 0))?;
    if let Some(path) = &a.curve {
        write_curve_csv(path, &report.curve)?;
    }
    if let Some(epoch) = report.diverged_at {
        eprintln!("training diverged in epoch {epoch}");
        println!("0.000000");
        return Err(Failure {
            code: EXIT_RUNTIME,
            message: format!("{task}: parameters became non-finite"),
        });
    }
    println!("{:.6}", report.val_accuracy);
    Ok(())
}

fn cmd_benchmark(config: &Path, out: &Path) -> Result<(), Failure> {
    let grid = BenchmarkGrid::load(config).map_err(config_failure)?;
    let report = run_benchmark(&grid, out)?;
    for (loss, r) in report.table.losses.iter().zip(&report.table.average_rank) {
        eprintln!("{loss}: average rank {r:.3}");
    }
    Ok(())
}

fn cmd_inspect_loss(loss: &str, resolution: usize, out: &Path) -> Result<(), Failure> {
    let loss = resolve_loss(loss, &ReferenceDefaults::default()).map_err(config_failure)?;
    let points = loss_surface(&loss, resolution).map_err(config_failure)?;
    write_file(out, &surface_csv(&points))
}

fn read_pairing(path: &Path) -> Result<Vec<usize>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_failure(Error::io(path, e)))?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("{}: pairing must be a JSON array of class indices: {e}", path.display()),
    })
}

fn cmd_make_noise_matrix(noise: &str, classes: usize, pairing: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let setting = parse::<NoiseSetting>("noise", noise)?;
    let pairing = pairing.map(read_pairing).transpose()?;
    let t = noise_matrix(setting, classes, pairing).map_err(config_failure)?;
    write_file(out, &t.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MetaTrain { config, out, resume } => cmd_meta_train(config, out, *resume),
        Command::Train(a) => cmd_train(a),
        Command::Benchmark { config, out } => cmd_benchmark(config, out),
        Command::InspectLoss { loss, resolution, out } => cmd_inspect_loss(loss, *resolution, out),
        Command::MakeNoiseMatrix {
            noise,
            classes,
            pairing,
            out,
        } => cmd_make_noise_matrix(noise, *classes, pairing.as_deref(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
