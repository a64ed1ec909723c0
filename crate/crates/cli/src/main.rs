//! Batch experiment runner. Exit status 0 means the config's expectation
//! held, 1 that it did not, 2 a usage or configuration problem.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Engine(#[from] ratcons::engine::EngineError),
    #[error(transparent)]
    Game(#[from] ratcons::game::GameError),
    #[error(transparent)]
    Epistemics(#[from] ratcons::epistemics::EpistemicsError),
}

#[derive(Parser)]
#[command(name = "ratcons", version, about = "Consensus among rational agents: runs, deviation searches and knowledge checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the enumeration cap.
    #[arg(long)]
    cap: Option<u128>,
    /// Seed for the sampling fallback.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute or enumerate honest runs; writes traces and a summary.
    Run(Common),
    /// Search coalition deviations; writes equilibrium.json.
    Equilibrium(Common),
    /// Run the configured knowledge check; writes verify.json.
    Verify(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (common, which) = match &cli.cmd {
        Cmd::Run(c) => (c, "run"),
        Cmd::Equilibrium(c) => (c, "equilibrium"),
        Cmd::Verify(c) => (c, "verify"),
    };
    let result = ExperimentConfig::load(&common.config).and_then(|cfg| match cli.cmd {
        Cmd::Run(_) => commands::run(&cfg, &common.out, common.cap, common.seed),
        Cmd::Equilibrium(_) => commands::equilibrium(&cfg, &common.out, common.cap),
        Cmd::Verify(_) => commands::verify(&cfg, &common.out, common.cap),
    });
    match result {
        Ok(done) => {
            println!("{which}: {}", done.summary);
            if done.met {
                ExitCode::SUCCESS
            } else {
                println!("{which}: expectation not met");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
