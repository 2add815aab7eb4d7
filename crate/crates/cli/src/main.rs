mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netfense::defense::Strategy;
use netfense::eval::Mode;
use netfense::Error;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "netfense", version, about = "Edge-perturbation defense against private-label inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// clean, random, nt or netfense.
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,

    /// single or multi.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train the target and private GCNs on the clean graph.
    Train,
    /// Perturb the graph around the targets with the chosen strategy.
    Defend,
    /// Run the evaluation protocol and write the report.
    Evaluate,
    /// Compare candidate-selection strategies by clustering drift.
    Compare,
    /// Sweep loss exponents, budgets or threshold quantiles.
    Sweep,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) | Error::DegeneratePerturbation { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        strategy: cli.strategy,
        mode: cli.mode,
    };
    let result = RunConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Defend => commands::defend(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
