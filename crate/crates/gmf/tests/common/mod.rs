#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gmf::codec::save_image;
use gmf_core::data::PixelGrid;
use gmf_core::eval::Classifier;
use gmf_core::{Result, Tensor};

pub const CLASS_DIRS: [&str; 6] = ["0_happiness", "1_surprise", "2_sadness", "3_anger", "4_disgust", "5_fear"];

/// Ramp image whose direction and tint depend on `class`.
pub fn class_image(class: usize, variant: usize, size: usize) -> PixelGrid {
    PixelGrid::from_fn_rgb(size, size, |x, y| {
        let t = match class % 3 {
            0 => x,
            1 => y,
            _ => (x + y) / 2,
        };
        let v = (t * 255 / size.max(2)) as u8;
        let v = if class >= 3 { 255 - v } else { v };
        [v, v.wrapping_add((variant * 11) as u8), (class * 40) as u8]
    })
}

/// `per_class` PNGs in each class folder under `root`.
pub fn class_tree(root: &Path, per_class: usize, size: usize) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for (c, dir) in CLASS_DIRS.iter().enumerate() {
        for v in 0..per_class {
            let path = root.join(dir).join(format!("img{v}.png"));
            save_image(&class_image(c, v, size), &path).unwrap();
            out.push(path);
        }
    }
    out
}

/// Returns the same logits for every image.
pub struct Fixed(pub [f32; 6]);

impl Classifier for Fixed {
    fn logits(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let b = batch.shape()[0];
        Tensor::from_vec(&[b, 6], self.0.repeat(b))
    }
}
