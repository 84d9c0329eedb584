//! Command-line workflow: validate, run, select, allocate, response,
//! refresh and simulate.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixmodel::evaluation::Weights;

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn input(message: String) -> Self {
        Failure { code: 2, message }
    }

    pub fn internal(message: String) -> Self {
        Failure { code: 1, message }
    }
}

impl From<mixmodel::Error> for Failure {
    fn from(e: mixmodel::Error) -> Self {
        Failure {
            code: if e.is_invalid_input() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "mixmodel", version, about = "Media mix modeling: infer, calibrate, select, allocate, refresh")]
struct Cli {
    /// Seed for search, allocation restarts and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the search and rendering.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "output")]
    out: PathBuf,
    /// Log progress.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and its dataset.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Decompose, search, rank and cluster; writes a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Objective weights for NRMSE, DECOMP.RSSD and MAPE.LIFT.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<Weights>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Name of the run directory (default: derived from the inputs).
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Export one candidate of a run as the selected model.
    Select {
        model_id: String,
        #[arg(long)]
        run: PathBuf,
    },
    /// Recommend a spend allocation for a selected model.
    Allocate {
        /// Model file, or a run directory with a selection.
        #[arg(long)]
        model: PathBuf,
        /// Dataset (default: the path recorded in the model).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "max_response")]
        scenario: String,
        /// Lower bound multiplier(s) of historical spend.
        #[arg(long, default_value = "0.7")]
        low: String,
        /// Upper bound multiplier(s) of historical spend.
        #[arg(long, default_value = "1.5")]
        up: String,
        /// Total budget over the date range.
        #[arg(long)]
        budget: Option<f64>,
        /// ROAS floor or CPA ceiling for target_efficiency.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        date_start: Option<String>,
        #[arg(long)]
        date_end: Option<String>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        allow_fingerprint_mismatch: bool,
    },
    /// Response and marginal return of one channel at a spend level.
    Response {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        channel: String,
        /// Mean spend per period (default: historical mean).
        #[arg(long)]
        spend: Option<f64>,
        #[arg(long)]
        allow_fingerprint_mismatch: bool,
    },
    /// Re-estimate a selected model on a window advanced over new data.
    Refresh {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 13)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Lift studies replacing the model's own.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Write a synthetic dataset with its ground truth.
    Simulate {
        #[arg(long, default_value_t = 208)]
        periods: usize,
        #[arg(long, default_value_t = 5)]
        channels: usize,
        /// Noise sd as a fraction of the noiseless response sd.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        organic: bool,
        #[arg(long)]
        context: bool,
        /// Lift studies to cut from the ledger.
        #[arg(long, default_value_t = 0)]
        studies: usize,
        #[arg(long, default_value_t = 6)]
        study_length: usize,
        /// Trailing periods left out of the configured window.
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        #[arg(long)]
        start: Option<String>,
    },
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    Weights::parse(s).map_err(|e| e.to_string())
}

pub struct Global {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = Global {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    };
    if g.workers == Some(0) {
        return Err(Failure::input("--workers must be at least 1".into()));
    }
    match cli.command {
        Command::Validate { config } => commands::validate(&config),
        Command::Run {
            config,
            weights,
            iterations,
            trials,
            run_id,
        } => commands::run(
            &g,
            commands::RunArgs {
                config,
                weights,
                iterations,
                trials,
                run_id,
            },
        )
        .map(drop),
        Command::Select { model_id, run } => commands::select(&run, &model_id).map(drop),
        Command::Allocate {
            model,
            data,
            scenario,
            low,
            up,
            budget,
            target,
            date_start,
            date_end,
            restarts,
            allow_fingerprint_mismatch,
        } => commands::allocate_cmd(
            &g,
            commands::AllocateArgs {
                model,
                data,
                scenario,
                low,
                up,
                budget,
                target,
                date_start,
                date_end,
                restarts,
                allow_fingerprint_mismatch,
            },
        )
        .map(drop),
        Command::Response {
            model,
            data,
            channel,
            spend,
            allow_fingerprint_mismatch,
        } => commands::response(&g, &model, data.as_deref(), &channel, spend, allow_fingerprint_mismatch),
        Command::Refresh {
            model,
            data,
            steps,
            iterations,
            trials,
            calibration,
            run_id,
        } => commands::refresh(
            &g,
            commands::RefreshArgs {
                model,
                data,
                steps,
                iterations,
                trials,
                calibration,
                run_id,
            },
        )
        .map(drop),
        Command::Simulate {
            periods,
            channels,
            noise,
            organic,
            context,
            studies,
            study_length,
            holdout,
            start,
        } => commands::simulate_cmd(
            &g,
            commands::SimulateArgs {
                periods,
                channels,
                noise,
                organic,
                context,
                studies,
                study_length,
                holdout,
                start,
            },
        )
        .map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
