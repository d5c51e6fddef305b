use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{self, Augmentation, Planes};
use super::grid::{resize_bilinear, PixelGrid};
use crate::{Error, Mode, Result, Tensor};

/// How raw images become model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub grayscale_channels: usize,
    pub normalize_mean: [f32; 3],
    pub normalize_std: [f32; 3],
    #[serde(default)]
    pub augmentations: Vec<Augmentation>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 64,
            grayscale_channels: 3,
            normalize_mean: [0.5; 3],
            normalize_std: [0.5; 3],
            augmentations: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    pub fn with_augmentations(augmentations: Vec<Augmentation>) -> Self {
        PreprocessConfig { augmentations, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::config("target size must be positive"));
        }
        if self.grayscale_channels != 3 {
            return Err(Error::config(format!("expected 3 output channels, got {}", self.grayscale_channels)));
        }
        if self.normalize_std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::config("normalization std must be positive"));
        }
        for op in &self.augmentations {
            let ok = match *op {
                Augmentation::HorizontalFlip { p } => (0.0..=1.0).contains(&p),
                Augmentation::Rotation { max_degrees } => max_degrees.is_finite() && max_degrees >= 0.0,
                Augmentation::Crop { .. } => true,
                Augmentation::Erasing { p, min_area, max_area } => {
                    (0.0..=1.0).contains(&p) && 0.0 < min_area && min_area <= max_area && max_area <= 1.0
                }
            };
            if !ok {
                return Err(Error::config(format!("invalid augmentation {op:?}")));
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.grayscale_channels, self.target_size, self.target_size]
    }
}

/// Grayscale, resize, replicate to three channels, scale to `[0, 1]`,
/// augment (train mode only) and normalize.
pub fn preprocess<R: Rng + ?Sized>(grid: &PixelGrid, cfg: &PreprocessConfig, mode: Mode, rng: &mut R) -> Tensor<f32> {
    let s = cfg.target_size;
    let gray = resize_bilinear(&grid.luma(), grid.width(), grid.height(), s, s);
    let c = cfg.grayscale_channels;
    let mut data = Vec::with_capacity(c * s * s);
    for _ in 0..c {
        data.extend(gray.iter().map(|&v| v / 255.0));
    }
    if mode == Mode::Train && !cfg.augmentations.is_empty() {
        let mut planes = Planes { data: &mut data, channels: c, height: s, width: s };
        augment::apply(&mut planes, &cfg.augmentations, rng);
    }
    for (ch, plane) in data.chunks_exact_mut(s * s).enumerate() {
        let (m, sd) = (cfg.normalize_mean[ch % 3], cfg.normalize_std[ch % 3]);
        plane.iter_mut().for_each(|v| *v = (*v - m) / sd);
    }
    Tensor::from_vec(&[c, s, s], data).expect("preprocessed shape")
}
