//! Accuracy, confusion matrices and per-image scores.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, ClassLabel, Dataset};
use crate::gradcam::{grad_cam, CamResult};
use crate::model::Model;
use crate::nn::{argmax, softmax_row};
use crate::{Error, Mode, Result, Tensor, NUM_CLASSES};

/// Anything that maps a batch `[B, 3, S, S]` to logits `[B, 6]`.
pub trait Classifier {
    fn logits(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;

    /// Grad-CAM for one image `[1, 3, S, S]`; `None` when the classifier
    /// cannot explain itself.
    fn explain(&mut self, _image: &Tensor<f32>, _target: Option<ClassLabel>) -> Result<Option<CamResult>> {
        Ok(None)
    }
}

impl Classifier for Model<f32> {
    fn logits(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict(batch)
    }

    fn explain(&mut self, image: &Tensor<f32>, target: Option<ClassLabel>) -> Result<Option<CamResult>> {
        grad_cam(self, image, target).map(Some)
    }
}

/// Counts with rows indexed by true class and columns by prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Classifies every sample of `data` in eval mode, in index order.
pub fn evaluate<C: Classifier + ?Sized, D: Dataset + ?Sized>(clf: &mut C, data: &D, batch_size: usize) -> Result<Evaluation> {
    let mut cm = ConfusionMatrix::new();
    for idx in batch_indices(data.len(), batch_size, false, 0, 0)? {
        let seeds = alloc::vec![0; idx.len()];
        let (x, labels) = data.load_batch(&idx, Mode::Eval, &seeds)?;
        let logits = clf.logits(&x)?;
        record_batch(&mut cm, &logits, &labels)?;
    }
    Ok(Evaluation { accuracy: cm.accuracy(), confusion: cm })
}

/// Adds the argmax prediction of each logit row to `cm`.
pub fn record_batch(cm: &mut ConfusionMatrix, logits: &Tensor<f32>, labels: &[usize]) -> Result<()> {
    if logits.shape() != [labels.len(), NUM_CLASSES] {
        return Err(Error::shape(format!("expected logits [{}, {NUM_CLASSES}], got {:?}", labels.len(), logits.shape())));
    }
    for (row, &truth) in logits.data().chunks_exact(NUM_CLASSES).zip(labels) {
        if truth >= NUM_CLASSES {
            return Err(Error::Label(truth));
        }
        cm.record(truth, argmax(row));
    }
    Ok(())
}

/// Softmax scores of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub path: String,
    pub label: Option<ClassLabel>,
    pub pred: ClassLabel,
    pub scores: [f64; NUM_CLASSES],
}

impl ScoreRecord {
    pub fn from_logits(path: impl Into<String>, label: Option<ClassLabel>, logits: &[f32]) -> Result<Self> {
        if logits.len() != NUM_CLASSES {
            return Err(Error::shape(format!("expected {NUM_CLASSES} logits, got {}", logits.len())));
        }
        let z: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let mut scores = [0.0; NUM_CLASSES];
        softmax_row(&z, &mut scores)?;
        Ok(ScoreRecord { path: path.into(), label, pred: ClassLabel::from_id(argmax(&z))?, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_is_trace_over_total() {
        let mut cm = ConfusionMatrix::new();
        assert_eq!(cm.accuracy(), 0.0);
        cm.record(0, 0);
        cm.record(1, 2);
        cm.record(2, 2);
        assert_eq!(cm.total(), 3);
        assert_eq!(cm.trace(), 2);
        assert_eq!(cm.accuracy(), 2.0 / 3.0);
        let mut other = ConfusionMatrix::new();
        other.record(5, 5);
        cm.merge(&other);
        assert_eq!(cm.row_sums(), [1, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn score_record_closed_form() {
        let r = ScoreRecord::from_logits("a.png", None, &[core::f32::consts::LN_2, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.pred, ClassLabel::Happiness);
        assert!((r.scores[0] - 2.0 / 7.0).abs() < 1e-7);
        assert!(r.scores[1..].iter().all(|&s| (s - 1.0 / 7.0).abs() < 1e-7));
        assert!((r.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
