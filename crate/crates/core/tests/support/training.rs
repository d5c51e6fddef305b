//! Overfit and evaluation fixtures shared by the training tests.

use std::ops::ControlFlow;

use gmf_core::data::{InMemoryDataset, PreprocessConfig};
use gmf_core::eval::{evaluate, Classifier, Evaluation};
use gmf_core::model::{Model, ModelSpec};
use gmf_core::train::{train, EpochMetrics, TrainConfig};
use gmf_core::{Result, Tensor};

use super::fixtures;

pub const OVERFIT_EPOCHS: usize = 200;

pub fn overfit_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        momentum: 0.9,
        weight_decay: 1e-4,
        batch_size: 8,
        epochs: OVERFIT_EPOCHS,
        seed: 0,
        ..Default::default()
    }
}

/// Trains gimefive-15 on the 60-image fixture until every training image is
/// classified correctly. Returns that epoch (if reached) and the history.
pub fn overfit_run() -> (Option<usize>, Vec<EpochMetrics>) {
    let data = InMemoryDataset::new(fixtures::overfit_set(64), PreprocessConfig::default());
    let mut model = Model::<f32>::build(&ModelSpec::from_arch("gimefive15").unwrap(), 0).unwrap();
    let report = train(&mut model, &data, &data, &overfit_config(), |m| {
        if m.train_acc == 1.0 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    let reached = report.history.iter().find(|m| m.train_acc == 1.0).map(|m| m.epoch);
    (reached, report.history)
}

/// Predicts from a hash of each image's pixels: an arbitrary but fixed
/// labeling that is right roughly one time in six.
pub struct HashClassifier;

impl Classifier for HashClassifier {
    fn logits(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let b = batch.shape()[0];
        let per = batch.numel() / b;
        let mut out = vec![0f32; b * 6];
        for (i, img) in batch.data().chunks(per).enumerate() {
            let h = img.iter().fold(0u64, |h, v| gmf_core::data::mix(h ^ v.to_bits() as u64));
            out[i * 6 + (h % 6) as usize] = 1.0;
        }
        Tensor::from_vec(&[b, 6], out)
    }
}

/// 100 images of every class, evaluated by [`HashClassifier`].
pub fn balanced_stub_evaluation() -> Evaluation {
    let images = (0..6).flat_map(|c| (0..100).map(move |v| (fixtures::gradient_image(c, v, 12), gmf_core::data::ClassLabel::ALL[c])));
    let config = PreprocessConfig { target_size: 12, ..Default::default() };
    let data = InMemoryDataset::new(images.collect(), config);
    evaluate(&mut HashClassifier, &data, 64).unwrap()
}
