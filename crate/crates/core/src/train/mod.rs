//! Optimization loop, early stopping and hyperparameter grids.

mod grid;
mod optim;

pub use grid::{grid_search, rank, Activation, GridPoint, GridResult, GridSpec};
pub use optim::{sgd_update, Optimizer, OptimizerConfig, OptimizerKind, ADAM_BETAS, ADAM_EPS};

use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{batch_indices, sample_seed, Dataset};
use crate::eval::evaluate;
use crate::model::Model;
use crate::{Error, Mode, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub early_stopping: bool,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 40,
            early_stopping: false,
            patience: 5,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.early_stopping && self.patience == 0 {
            return Err(Error::config("patience must be at least 1 with early stopping"));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// Tracks epochs since the monitored metric last improved.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, stale: 0 }
    }

    /// Records one epoch's metric (higher is better). Returns true once
    /// more than `patience` consecutive epochs have passed without a
    /// strict improvement.
    pub fn observe(&mut self, metric: f64) -> bool {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale > self.patience
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Eval-mode accuracy on the training set.
    pub train_acc: f64,
    pub valid_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
    /// Epoch with the highest validation accuracy; the earliest on ties.
    pub best_epoch: usize,
    pub best_valid_acc: f64,
    pub best_model: Model<f32>,
    pub stopped_early: bool,
}

const DROPOUT_STREAM: u64 = 0x6472_6f70;

/// Runs one epoch of mini-batch updates and returns the mean loss.
pub fn train_epoch<D: Dataset + ?Sized>(
    model: &mut Model<f32>,
    opt: &mut Optimizer<f32>,
    data: &D,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (b, idx) in batch_indices(data.len(), batch_size, true, seed, epoch)?.into_iter().enumerate() {
        let seeds: Vec<u64> = idx.iter().map(|&i| sample_seed(seed, epoch, i)).collect();
        let (x, labels) = data.load_batch(&idx, Mode::Train, &seeds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ DROPOUT_STREAM, epoch, b));
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let pass = model.forward(&mut tape, xv, Mode::Train, &mut rng)?;
        let loss = tape.cross_entropy(pass.logits, &labels)?;
        let value = tape.data(loss)[0] as f64;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, batch: b, loss: value });
        }
        let grads = tape.backward(loss)?;
        drop(tape);
        model.zero_grads();
        model.accumulate_grads(&grads, &pass)?;
        opt.step(model)?;
        total += value * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains `model` on `train`, measuring validation accuracy after every
/// epoch. `on_epoch` sees each epoch's metrics and may end training early.
pub fn train<D, V>(
    model: &mut Model<f32>,
    train: &D,
    valid: &V,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> ControlFlow<()>,
) -> Result<TrainReport>
where
    D: Dataset + ?Sized,
    V: Dataset + ?Sized,
{
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut opt = Optimizer::new(cfg.optimizer_config())?;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let train_loss = train_epoch(model, &mut opt, train, cfg.batch_size, cfg.seed, epoch)?;
        let train_acc = evaluate(model, train, cfg.batch_size)?.accuracy;
        let valid_acc = evaluate(model, valid, cfg.batch_size)?.accuracy;
        let m = EpochMetrics { epoch, train_loss, train_acc, valid_acc };
        log::info!("epoch {epoch}: loss {train_loss:.6} train {train_acc:.4} valid {valid_acc:.4}");
        history.push(m);
        if best.as_ref().is_none_or(|(_, acc, _)| valid_acc > *acc) {
            best = Some((epoch, valid_acc, model.clone()));
        }
        if on_epoch(&m).is_break() {
            break;
        }
        if cfg.early_stopping && stopper.observe(valid_acc) {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_valid_acc, best_model) = best.unwrap_or_else(|| (0, 0.0, model.clone()));
    Ok(TrainReport { history, best_epoch, best_valid_acc, best_model, stopped_early })
}
