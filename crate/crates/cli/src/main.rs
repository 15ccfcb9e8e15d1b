//! `clickchoice`: estimate and evaluate product-choice probability tables
//! from clickstream recency/frequency features.
//!
//! Subcommands mirror the pipeline stages: `simulate` generates a synthetic
//! clickstream, `features` turns events into labeled samples and count
//! tensors, `fit` estimates a model (`mono`, `mcc`, `lcmcc` or `lclr`),
//! `evaluate` scores top-N purchase predictions, `report` summarizes latent
//! classes. Every stage is deterministic given its inputs, seed and flags.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clickchoice_core::Error;

#[derive(Parser)]
#[command(name = "clickchoice", version, about, max_term_width = 100)]
struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; defaults to the available cores. Results do not
    /// depend on the thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clickstream with planted latent classes.
    Simulate(commands::simulate::SimulateArgs),
    /// Extract per-base-date samples and a count tensor from an event log.
    Features(commands::features::FeaturesArgs),
    /// Fit a probability-table model to a count tensor.
    Fit(commands::fit::FitArgs),
    /// Evaluate top-N purchase prediction of a fitted model.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Summarize the latent classes of a fitted model.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLICKCHOICE_LOG", "info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.threads {
        pool = pool.num_threads(threads);
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: cannot initialize thread pool: {e}");
        return ExitCode::from(1);
    }

    log::info!(
        "{} {} (threads: {})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        rayon::current_num_threads()
    );

    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(fc) => fc,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args, &file_config),
        Command::Features(args) => commands::features::run(args, &file_config),
        Command::Fit(args) => commands::fit::run(args, &file_config),
        Command::Evaluate(args) => commands::evaluate::run(args, &file_config),
        Command::Report(args) => commands::report::run(args, &file_config),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Solver(_) | Error::Numerical(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
