//! Batch front end: simulate panels, fit them, check identifiability, run
//! the correlation approximation, and sweep study scenarios.
//!
//! Exit codes: 0 on success, 2 on validation failure, 3 on convergence
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{FileConfig, DEFAULT_SEED};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn validation(message: String) -> Self {
        Self { code: 2, message }
    }

    fn convergence(message: String) -> Self {
        Self { code: 3, message }
    }
}

#[derive(Parser)]
#[command(
    name = "copar",
    version,
    about = "Coupled Poisson autoregression for grouped count panels"
)]
struct Cli {
    /// Worker threads for chains and replicates (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel and write it with its config sidecar.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a panel and write draws plus diagnostics.
    Fit {
        /// Panel file: wide `t,y,x1,...` or long `year,series,count`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Desk-scale sampler budget (4000 iterations, burn-in 1000, thin 4).
        #[arg(long)]
        fast: bool,
        /// Fit the formation/splitting variant of the model.
        #[arg(long)]
        splitting: bool,
    },
    /// Approximate the net group correlation from a panel.
    Correlate {
        #[arg(long)]
        input: PathBuf,
        /// JSON file with population-level parameters.
        #[arg(long, conflicts_with = "from_fit")]
        hyper: Option<PathBuf>,
        /// Take posterior means from a fit diagnostics file.
        #[arg(long = "from-fit")]
        from_fit: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dispersion below which the per-group values count as consistent.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Proceed despite stationarity warnings.
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a simulate/fit/score scenario sweep.
    Scenario {
        /// S1..S5, or "custom" to build from the config file.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Desk-scale budget (the default).
        #[arg(long)]
        fast: bool,
        /// Full study protocol: 100 replicates at the long sampler budget.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let config = FileConfig::load(config.as_deref())?;
            commands::cmd_simulate(&config, seed, &out, quiet)
        }
        Command::Fit {
            input,
            config,
            seed,
            out,
            fast,
            splitting,
        } => {
            let config = FileConfig::load(config.as_deref())?;
            commands::cmd_fit(&input, &config, seed, &out, fast, splitting, quiet)
        }
        Command::Correlate {
            input,
            hyper,
            from_fit,
            config,
            tolerance,
            force,
            seed,
            out,
        } => {
            let config = FileConfig::load(config.as_deref())?;
            commands::cmd_correlate(
                &input,
                hyper.as_deref(),
                from_fit.as_deref(),
                &config,
                tolerance,
                force,
                seed,
                &out,
                quiet,
            )
        }
        Command::Scenario {
            id,
            replicates,
            fast,
            full,
            config,
            seed,
            out,
        } => {
            let config = FileConfig::load(config.as_deref())?;
            commands::cmd_scenario(
                id.as_deref(),
                replicates,
                fast,
                full,
                &config,
                seed,
                &out,
                quiet,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
