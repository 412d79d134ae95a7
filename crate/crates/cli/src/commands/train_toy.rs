//! Trains a small model on the synthetic noise-versus-tones task.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use cadenza_core::synth::ToyTask;
use cadenza_core::tasnet::{TasNet, TasNetConfig};
use cadenza_core::train::{fit, FitResult, TrainConfig};

use super::write_json;
use crate::{usage, RunContext};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output weight file.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV: epoch, lr, train_loss, valid_loss.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyRunConfig {
    pub model: TasNetConfig,
    pub train: TrainConfig,
    pub task: ToyTask,
    pub train_samples: usize,
    pub valid_samples: usize,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            model: TasNetConfig::tiny(false),
            train: TrainConfig {
                batch_size: 4,
                lr0: 3e-3,
                crop_s: 0.5,
                target: ToyTask::TARGET,
                max_steps: Some(500),
                ..TrainConfig::default()
            },
            task: ToyTask::default(),
            train_samples: 16,
            valid_samples: 2,
        }
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    seed: u64,
    config: &'a ToyRunConfig,
    best_epoch: usize,
    steps: usize,
    epochs_run: usize,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ToyRunConfig> {
    let Some(p) = path else {
        return Ok(ToyRunConfig::default());
    };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn write_history(path: &Path, fit: &FitResult) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in &fit.history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.train.seed = ctx.seed;
    cfg.model.validate()?;
    cfg.train.validate()?;
    if cfg.train.target != ToyTask::TARGET {
        return Err(usage(format!("toy task target is {}", ToyTask::TARGET)));
    }
    let train = cfg.task.pool(ctx.seed, 0, cfg.train_samples)?;
    let valid = cfg.task.pool(ctx.seed, 1000, cfg.valid_samples)?;
    let result = fit(&cfg.model, &cfg.train, &train, &valid)?;

    TasNet::new(cfg.model.clone(), result.weights.clone())?.save(&a.out)?;
    if let Some(h) = &a.history {
        write_history(h, &result)?;
    }
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".run.json");
    write_json(
        Path::new(&sidecar),
        &RunRecord {
            seed: ctx.seed,
            config: &cfg,
            best_epoch: result.best_epoch,
            steps: result.steps,
            epochs_run: result.history.len(),
        },
    )?;
    if let Some(last) = result.history.last() {
        eprintln!(
            "{} steps, best epoch {}, final valid loss {:.6}",
            result.steps, result.best_epoch, last.valid_loss
        );
    }
    Ok(())
}
