//! `cadenza`: render spatial scenes, build validation sets, separate,
//! evaluate and report.

mod commands;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cadenza_core::Error as CoreError;

/// Raised for bad flags or configuration; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "cadenza", version, about = "Spatial music separation benchmark toolkit")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; CADENZA_THREADS takes precedence when set.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render mono stems into a stereo scene.
    Spatialize(commands::spatialize::Args),
    /// Build a validation set from a corpus manifest.
    Mix(commands::mix::Args),
    /// Separate a mixture with a trained model.
    Separate(commands::separate::Args),
    /// Score estimates against references.
    Evaluate(commands::evaluate::Args),
    /// Train a tiny model on the synthetic two-source task.
    TrainToy(commands::train_toy::Args),
    /// Render result tables and significance tests.
    Report(commands::report::Args),
}

/// Shared settings passed to every command.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub threads: usize,
}

fn resolve_threads(flag: usize) -> anyhow::Result<usize> {
    let n = match std::env::var("CADENZA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("CADENZA_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => flag,
    };
    if n == 0 {
        return Err(usage("thread count must be positive"));
    }
    Ok(n)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = resolve_threads(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    let ctx = RunContext {
        seed: cli.seed,
        threads,
    };
    match cli.command {
        Command::Spatialize(a) => commands::spatialize::run(&ctx, a),
        Command::Mix(a) => commands::mix::run(&ctx, a),
        Command::Separate(a) => commands::separate::run(&ctx, a),
        Command::Evaluate(a) => commands::evaluate::run(&ctx, a),
        Command::TrainToy(a) => commands::train_toy::run(&ctx, a),
        Command::Report(a) => commands::report::run(&ctx, a),
    }
}

/// 2 for usage, configuration and input errors; 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::NoValidFrames
            | CoreError::DegenerateSamples
            | CoreError::Graph(_)
            | CoreError::Divergence { .. },
        ) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub(crate) fn ensure_dir(dir: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(())
}
