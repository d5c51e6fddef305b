use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{OptimizerKind, TrainConfig};
use crate::model::{GlobalPool, ModelSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Candidate values per hyperparameter. Configurations are enumerated as
/// a mixed-radix counter in field order, the last field varying fastest,
/// and each list in the order given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub dropout: Vec<f64>,
    pub conv_blocks: Vec<usize>,
    pub fc_layers: Vec<usize>,
    pub batch_norm: Vec<bool>,
    pub pooling: Vec<GlobalPool>,
    pub optimizer: Vec<OptimizerKind>,
    pub activation: Vec<Activation>,
    pub epochs: Vec<usize>,
    pub early_stopping: Vec<bool>,
    pub patience: Vec<usize>,
}

/// One assignment drawn from a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub conv_blocks: usize,
    pub fc_layers: usize,
    pub batch_norm: bool,
    pub pooling: GlobalPool,
    pub optimizer: OptimizerKind,
    pub activation: Activation,
    pub epochs: usize,
    pub early_stopping: bool,
    pub patience: usize,
}

impl GridSpec {
    /// The built-in search space (62,208 configurations).
    pub fn standard() -> Self {
        GridSpec {
            learning_rate: vec![1e-2, 1e-3, 1e-4],
            batch_size: vec![8, 16, 32, 64],
            dropout: vec![0.2, 0.5],
            conv_blocks: vec![4, 5, 6],
            fc_layers: vec![1, 2, 3],
            batch_norm: vec![true, false],
            pooling: vec![GlobalPool::Max, GlobalPool::AdaptiveAvg],
            optimizer: vec![OptimizerKind::Adam, OptimizerKind::Adamw, OptimizerKind::Sgd],
            activation: vec![Activation::Relu],
            epochs: vec![10, 20, 40, 80],
            early_stopping: vec![true, false],
            patience: vec![5, 10, 15],
        }
    }

    /// A grid holding exactly one configuration.
    pub fn single(p: &GridPoint) -> Self {
        GridSpec {
            learning_rate: vec![p.learning_rate],
            batch_size: vec![p.batch_size],
            dropout: vec![p.dropout],
            conv_blocks: vec![p.conv_blocks],
            fc_layers: vec![p.fc_layers],
            batch_norm: vec![p.batch_norm],
            pooling: vec![p.pooling],
            optimizer: vec![p.optimizer],
            activation: vec![p.activation],
            epochs: vec![p.epochs],
            early_stopping: vec![p.early_stopping],
            patience: vec![p.patience],
        }
    }

    fn radices(&self) -> [usize; 12] {
        [
            self.learning_rate.len(),
            self.batch_size.len(),
            self.dropout.len(),
            self.conv_blocks.len(),
            self.fc_layers.len(),
            self.batch_norm.len(),
            self.pooling.len(),
            self.optimizer.len(),
            self.activation.len(),
            self.epochs.len(),
            self.early_stopping.len(),
            self.patience.len(),
        ]
    }

    /// Number of configurations (the product of the list lengths).
    pub fn len(&self) -> usize {
        self.radices().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `index`-th configuration in enumeration order.
    pub fn nth(&self, index: usize) -> Option<GridPoint> {
        if index >= self.len() {
            return None;
        }
        let mut digits = [0; 12];
        let mut rest = index;
        for (d, &r) in digits.iter_mut().zip(self.radices().iter()).rev() {
            *d = rest % r;
            rest /= r;
        }
        Some(GridPoint {
            learning_rate: self.learning_rate[digits[0]],
            batch_size: self.batch_size[digits[1]],
            dropout: self.dropout[digits[2]],
            conv_blocks: self.conv_blocks[digits[3]],
            fc_layers: self.fc_layers[digits[4]],
            batch_norm: self.batch_norm[digits[5]],
            pooling: self.pooling[digits[6]],
            optimizer: self.optimizer[digits[7]],
            activation: self.activation[digits[8]],
            epochs: self.epochs[digits[9]],
            early_stopping: self.early_stopping[digits[10]],
            patience: self.patience[digits[11]],
        })
    }

    pub fn configs(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (0..self.len()).map(|i| self.nth(i).expect("index below len"))
    }
}

impl GridPoint {
    /// GiMeFive architecture for this point; `dropout` sets the rate after
    /// each conv block.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            conv_blocks: self.conv_blocks,
            fc_layers: self.fc_layers,
            batch_norm: self.batch_norm,
            global_pool: self.pooling,
            use_dropout: self.dropout > 0.0,
            conv_dropout: self.dropout,
            ..ModelSpec::gimefive(self.conv_blocks)
        }
    }

    /// Training settings for this point; the remaining fields come from `base`.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            epochs: self.epochs,
            early_stopping: self.early_stopping,
            patience: self.patience,
            ..base.clone()
        }
    }
}

/// Outcome of one grid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Position in enumeration order.
    pub index: usize,
    pub point: GridPoint,
    pub best_valid_acc: Option<f64>,
    pub error: Option<String>,
}

/// Sorts by best validation accuracy, descending; failed runs go last and
/// ties keep enumeration order.
pub fn rank(results: &mut [GridResult]) {
    results.sort_by(|a, b| match (a.best_valid_acc, b.best_valid_acc) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal).then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
}

/// Runs `train` on every selected configuration and ranks the results.
/// A failing configuration is recorded with its error.
pub fn grid_search(
    grid: &GridSpec,
    indices: impl IntoIterator<Item = usize>,
    mut train: impl FnMut(&GridPoint) -> Result<f64>,
) -> Result<Vec<GridResult>> {
    if grid.is_empty() {
        return Err(Error::config("hyperparameter grid is empty"));
    }
    let mut out = Vec::new();
    for index in indices {
        let point = grid.nth(index).ok_or_else(|| Error::config(format!("grid index {index} out of range")))?;
        let (best_valid_acc, error) = match train(&point) {
            Ok(acc) => (Some(acc), None),
            Err(e) => (None, Some(format!("{e}"))),
        };
        out.push(GridResult { index, point, best_valid_acc, error });
    }
    rank(&mut out);
    Ok(out)
}
