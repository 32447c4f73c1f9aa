//! Experiment runner: protocol runs, attack simulations, numerical bound
//! checks and transcript replay. Every command is a pure function of its
//! configuration and seed.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "qcc", version, about = "Two-party quantum computation lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one honest two-party session and write its transcript.
    RunProtocol(ExperimentConfig),
    /// Monte Carlo detection statistics for a registered scenario.
    AttackSim(ExperimentConfig),
    /// Numerical checks: epsilon2, qspcc or rewind.
    CheckBounds(ExperimentConfig),
    /// Validate a transcript and, given its summary, re-run and compare bytes.
    ReplayTranscript {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Classical cut-and-choose rate against the quantum bound, per s.
    GapReport(ExperimentConfig),
    /// Print the scenario registry as JSON lines.
    Scenarios,
}

/// Runs a parsed command, writing human-readable lines to `out`.
pub fn run(cli: Cli, env_out_dir: Option<PathBuf>, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::RunProtocol(c) => commands::run_protocol(&c.resolve(env_out_dir)?, out),
        Command::AttackSim(c) => commands::attack_sim(&c.resolve(env_out_dir)?, out),
        Command::CheckBounds(c) => commands::check_bounds(&c.resolve(env_out_dir)?, out),
        Command::ReplayTranscript { transcript, summary } => commands::replay(&transcript, summary.as_deref(), out),
        Command::GapReport(c) => commands::gap_report(&c.resolve(env_out_dir)?, out),
        Command::Scenarios => commands::scenarios(out),
    }
}
