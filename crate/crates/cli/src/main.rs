//! `dasel` — BLE indoor-localization pipeline CLI.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{effective_seeds, effective_train_config, Settings, TrainOverrides};

#[derive(Parser)]
#[command(name = "dasel", version, about = "BLE indoor-localization pipeline: simulate, prepare, train, predict, evaluate")]
struct Cli {
    /// Flat key = value settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for seeds/folds/inference (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainFlags {
    /// Comma-separated model seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic facility dataset (BLE CSVs, labels, MAC map).
    Simulate {
        /// Facility config file (see `simulate --preset` output for keys).
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        sim_config: Option<PathBuf>,
        /// Built-in facility: `small` or `imbalance`.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        seconds: Option<u32>,
    },
    /// Parse raw CSVs, align labels, and emit per-second feature frames.
    Prepare {
        /// Directory with ble_*.csv, labels.csv, macmap.csv.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Observer id whose annotations are kept.
        #[arg(long, default_value_t = 97)]
        observer: u32,
    },
    /// Train the multi-seed model ensemble from a frame CSV.
    Train {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Run two-level ensemble inference and temporal smoothing.
    Predict {
        #[arg(long)]
        frames: PathBuf,
        /// Directory of .dsl1 model archives.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of directional windows.
        #[arg(long)]
        directions: Option<String>,
        /// Skip the 5-second temporal smoothing pass.
        #[arg(long)]
        no_smooth: bool,
    },
    /// Score predictions, or run day-based cross-validation end to end.
    Evaluate {
        /// Labeled frame CSV (ground truth).
        #[arg(long, required_unless_present = "cv")]
        truth: Option<PathBuf>,
        /// Prediction CSV from `predict`.
        #[arg(long, requires = "truth", conflicts_with = "cv")]
        pred: Option<PathBuf>,
        /// Run cross-validation instead of scoring a prediction file.
        #[arg(long)]
        cv: bool,
        /// Labeled frame CSV for cross-validation.
        #[arg(long, requires = "cv")]
        frames: Option<PathBuf>,
        /// Stat-frame CSV (needed by the baseline pipelines).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Comma-separated list: baseline, baseline-var1, dasel, oracle, random.
        #[arg(long, default_value = "dasel")]
        pipeline: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        directions: Option<String>,
        #[arg(long)]
        no_smooth: bool,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        models: usize,
        #[arg(long, default_value_t = 220)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => settings.parse::<usize>("jobs")?,
    };
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .ok();
    }

    match cli.command {
        Command::Simulate {
            sim_config,
            preset,
            out,
            seed,
            days,
            seconds,
        } => commands::cmd_simulate(sim_config.as_deref(), preset.as_deref(), &out, seed, days, seconds),
        Command::Prepare { raw, out, observer } => commands::cmd_prepare(&raw, &out, observer),
        Command::Train { frames, out, train } => {
            let cfg = effective_train_config(
                &settings,
                &TrainOverrides {
                    epochs: train.epochs,
                    batch_size: train.batch,
                    learning_rate: train.lr,
                },
            )?;
            let seeds = effective_seeds(&settings, train.seeds.as_deref())?;
            commands::cmd_train(&frames, &out, &seeds, &cfg, &settings)
        }
        Command::Predict {
            frames,
            models,
            out,
            directions,
            no_smooth,
        } => commands::cmd_predict(&frames, &models, &out, directions.as_deref(), no_smooth, &settings),
        Command::Evaluate {
            truth,
            pred,
            cv,
            frames,
            stats,
            pipeline,
            out,
            directions,
            no_smooth,
            train,
        } => {
            if cv {
                let frames = frames.ok_or_else(|| anyhow::anyhow!("--cv requires --frames"))?;
                let cfg = effective_train_config(
                    &settings,
                    &TrainOverrides {
                        epochs: train.epochs,
                        batch_size: train.batch,
                        learning_rate: train.lr,
                    },
                )?;
                let seeds = effective_seeds(&settings, train.seeds.as_deref())?;
                commands::cmd_evaluate_cv(
                    &frames,
                    stats.as_deref(),
                    &pipeline,
                    &out,
                    seeds,
                    cfg,
                    directions.as_deref(),
                    no_smooth,
                )
            } else {
                let truth = truth.expect("clap enforces truth without --cv");
                let pred = pred.ok_or_else(|| anyhow::anyhow!("scoring mode requires --pred"))?;
                commands::cmd_evaluate_predictions(&truth, &pred, &out)
            }
        }
        Command::Gradcheck {
            models,
            samples,
            epsilon,
            seed,
            out,
        } => commands::cmd_gradcheck(models, samples, epsilon, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; help/version are not errors.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<dasel_core::DaselError>() {
                Some(dasel_core::DaselError::Numerical { .. }) => 3,
                Some(_) => 2,
                None => 2,
            };
            ExitCode::from(code)
        }
    }
}
