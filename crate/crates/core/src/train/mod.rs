//! Desk-scale training: gradient tape, Adam, plateau schedule and the epoch
//! loop over cropped, augmented target/residual pairs.

mod adam;
mod loss;
mod schedule;
mod tape;

use std::borrow::Cow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss, loss_l1, loss_neg_snr, LossKind, NEG_SNR_FLOOR, SNR_EPS};
pub use schedule::{PlateauSchedule, ScheduleEvent, IMPROVEMENT_EPS};
pub use tape::{Gradients, Tape, Var};

use crate::dataset::{augment, derive_seed, rng_for, target_pair, training_crop, AugmentConfig, MixtureSample};
use crate::error::{Error, Result};
use crate::instrument::Instrument;
use crate::tasnet::graph::{self, Eval};
use crate::tasnet::{TasNetConfig, TasNetWeights, Tensor};

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub crop_s: f64,
    pub target: Instrument,
    pub augment: AugmentConfig,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 4,
            lr0: 1e-3,
            plateau_patience: 5,
            lr_factor: 0.5,
            early_stop_patience: 20,
            loss: LossKind::L1,
            seed: 0,
            crop_s: 3.0,
            target: Instrument::Violin,
            augment: AugmentConfig::default(),
            max_steps: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::invalid("training counts must be positive"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid("lr_factor must lie in (0, 1)"));
        }
        if !(self.lr0 > 0.0 && self.crop_s > 0.0) {
            return Err(Error::invalid("lr0 and crop_s must be positive"));
        }
        if self.max_steps == Some(0) {
            return Err(Error::invalid("max_steps must be positive"));
        }
        Ok(())
    }
}

/// Mixture tensor and `[target, residual]` references of one sample.
pub fn training_example(sample: &MixtureSample, target: Instrument) -> Result<(Tensor, Vec<Tensor>)> {
    let pair = target_pair(sample, target)?;
    Ok((
        Tensor::from_rows(pair.mixture.channels())?,
        vec![
            Tensor::from_rows(pair.target.channels())?,
            Tensor::from_rows(pair.residual.channels())?,
        ],
    ))
}

/// Loss without recording anything.
pub fn eval_loss(
    cfg: &TasNetConfig,
    weights: &TasNetWeights,
    mixture: &Tensor,
    refs: &[Tensor],
    kind: LossKind,
) -> Result<f64> {
    let (_, len) = mixture.dims2()?;
    let mut g = Eval::new(weights);
    let est = graph::separate(&mut g, cfg, &Cow::Borrowed(mixture), len)?;
    let est: Vec<&Tensor> = est.iter().map(|c| c.as_ref()).collect();
    loss(kind, &est, refs)
}

/// Loss and its gradient with respect to every weight.
pub fn loss_and_grads(
    cfg: &TasNetConfig,
    weights: &TasNetWeights,
    mixture: &Tensor,
    refs: &[Tensor],
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    let (_, len) = mixture.dims2()?;
    let mut tape = Tape::new(weights);
    let x = tape.constant(mixture.clone());
    let est = graph::separate(&mut tape, cfg, &x, len)?;
    let l = match kind {
        LossKind::L1 => tape.l1(&est, refs)?,
        LossKind::NegSnr => tape.neg_snr(&est, refs)?,
    };
    let value = tape.value(&l)?.data()[0];
    let grads = tape.backward(l)?;
    Ok((value, grads))
}

/// Mean loss over full-length validation samples, without augmentation.
pub fn validation_loss(
    cfg: &TasNetConfig,
    weights: &TasNetWeights,
    pool: &[MixtureSample],
    target: Instrument,
    kind: LossKind,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::invalid("validation pool is empty"));
    }
    let mut total = 0.0;
    for s in pool {
        let (x, refs) = training_example(s, target)?;
        total += eval_loss(cfg, weights, &x, &refs, kind)?;
    }
    Ok(total / pool.len() as f64)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Weights at the epoch with the lowest validation loss.
    pub weights: TasNetWeights,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

pub fn fit(
    model_cfg: &TasNetConfig,
    cfg: &TrainConfig,
    train_pool: &[MixtureSample],
    valid_pool: &[MixtureSample],
) -> Result<FitResult> {
    if valid_pool.is_empty() {
        return Err(Error::invalid("validation pool is empty"));
    }
    fit_with(model_cfg, cfg, train_pool, |_, w| {
        validation_loss(model_cfg, w, valid_pool, cfg.target, cfg.loss)
    })
}

/// [`fit`] with a caller-supplied validation loss per epoch.
pub fn fit_with<F>(
    model_cfg: &TasNetConfig,
    cfg: &TrainConfig,
    train_pool: &[MixtureSample],
    mut validate: F,
) -> Result<FitResult>
where
    F: FnMut(usize, &TasNetWeights) -> Result<f64>,
{
    cfg.validate()?;
    if train_pool.is_empty() {
        return Err(Error::invalid("training pool is empty"));
    }
    let mut weights = TasNetWeights::init(model_cfg, cfg.seed)?;
    let mut best = weights.clone();
    let mut best_epoch = 0;
    let mut sched = PlateauSchedule::new(cfg.lr0, cfg.lr_factor, cfg.plateau_patience, cfg.early_stop_patience);
    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut steps = 0;
    let step_cap = cfg.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=cfg.epochs {
        let lr = sched.lr;
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train_pool.len()).collect();
        order.shuffle(&mut rng_for(epoch_seed));
        let mut batch_losses = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            if steps >= step_cap {
                break;
            }
            let mut sum: Option<Vec<Tensor>> = None;
            let mut names = Vec::new();
            let mut batch_loss = 0.0;
            for &i in batch {
                let crop = training_crop(&train_pool[i], cfg.crop_s, derive_seed(epoch_seed, 2 * i as u64))?;
                let aug = augment(&crop, &cfg.augment, derive_seed(epoch_seed, 2 * i as u64 + 1))?;
                let (x, refs) = training_example(&aug, cfg.target)?;
                let (l, g) = loss_and_grads(model_cfg, &weights, &x, &refs, cfg.loss)?;
                if !l.is_finite() {
                    return Err(Error::Divergence { epoch, history });
                }
                batch_loss += l;
                match &mut sum {
                    None => {
                        names = g.by_name.keys().cloned().collect();
                        sum = Some(g.by_name.into_values().collect());
                    }
                    Some(acc) => {
                        for (a, t) in acc.iter_mut().zip(g.by_name.values()) {
                            a.add_in_place(t);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let grads = names
                .into_iter()
                .zip(sum.expect("batches are non-empty"))
                .map(|(n, mut t)| {
                    t.data_mut().iter_mut().for_each(|v| *v *= scale);
                    (n, t)
                })
                .collect();
            adam_step(&mut weights, &grads, &mut adam, lr, &cfg.adam)?;
            steps += 1;
            batch_losses.push(batch_loss * scale);
        }
        let train_loss = if batch_losses.is_empty() {
            f64::NAN
        } else {
            batch_losses.iter().sum::<f64>() / batch_losses.len() as f64
        };
        let valid_loss = validate(epoch, &weights)?;
        if !valid_loss.is_finite() {
            return Err(Error::Divergence { epoch, history });
        }
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            valid_loss,
        });
        let ev = sched.observe(valid_loss);
        if ev.improved {
            best = weights.clone();
            best_epoch = epoch;
        }
        if ev.stop || steps >= step_cap {
            break;
        }
    }
    Ok(FitResult {
        weights: best,
        best_epoch,
        history,
        steps,
    })
}
