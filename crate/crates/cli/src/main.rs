//! `prorl`: train, evaluate and benchmark job-shop dispatching policies.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or parse failure, 4 internal error.

mod bench;
mod commands;
mod error;
mod inputs;
mod report;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "prorl", version, about = "Programmatic dispatching policies for job-shop scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Schedule an instance with one dispatching rule.
    Pdr(commands::PdrArgs),
    /// Pick a random rule at every decision.
    Random(commands::RandomArgs),
    /// Train a policy on an instance.
    Train(commands::TrainArgs),
    /// Run a saved policy on an instance.
    Eval(commands::EvalArgs),
    /// Compare methods over a directory of instances.
    Bench(bench::BenchArgs),
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PRORL_WORKERS") else {
        return Ok(());
    };
    let workers: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("PRORL_WORKERS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(CliError::internal)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match &cli.command {
        Command::Pdr(args) => commands::pdr(args),
        Command::Random(args) => commands::random(args),
        Command::Train(args) => commands::train_cmd(args),
        Command::Eval(args) => commands::eval(args),
        Command::Bench(args) => bench::bench(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
