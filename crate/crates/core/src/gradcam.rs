//! Gradient-weighted class activation maps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{ClassLabel, PixelGrid};
use crate::model::Model;
use crate::{Error, Mode, Result, Scalar, Tensor};

/// A heat map in `[0, 1]` over a `width × height` grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub target: ClassLabel,
}

impl CamMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Grad-CAM together with the intermediate quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct CamResult {
    /// Normalized map at the hooked layer's resolution.
    pub map: CamMap,
    /// `Σ_k α_k · A_k` before the ReLU.
    pub weighted: Vec<f64>,
    /// Spatial means of the gradient, one per channel.
    pub weights: Vec<f64>,
    /// Logits of the explained image.
    pub logits: Vec<f64>,
}

/// Combines activations `A: [K, H, W]` with their gradients `dA` into the
/// class map `ReLU(Σ_k mean(dA_k) · A_k)`, scaled so its peak is 1.
pub fn cam_from(activations: &[f64], grads: &[f64], channels: usize, height: usize, width: usize, target: ClassLabel) -> CamResult {
    let spatial = height * width;
    assert_eq!(activations.len(), channels * spatial, "activation size");
    assert_eq!(grads.len(), channels * spatial, "gradient size");
    let weights: Vec<f64> = grads.chunks_exact(spatial).map(|g| g.iter().sum::<f64>() / spatial as f64).collect();
    let mut weighted = vec![0.0; spatial];
    for (a, &w) in activations.chunks_exact(spatial).zip(&weights) {
        weighted.iter_mut().zip(a).for_each(|(s, &v)| *s += w * v);
    }
    let values = normalize_peak(weighted.iter().map(|&v| v.max(0.0)).collect());
    CamResult { map: CamMap { width, height, values, target }, weighted, weights, logits: Vec::new() }
}

/// Divides by the maximum; an all-zero (or negative) input stays zero.
fn normalize_peak(mut v: Vec<f64>) -> Vec<f64> {
    let peak = v.iter().fold(0.0f64, |m, &x| m.max(x));
    if peak > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x / peak).clamp(0.0, 1.0));
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Explains class `target` (or the predicted class when `None`) for one
/// image `x: [1, 3, H, W]` at the model's capture point. The raw logit,
/// not the softmax probability, is differentiated.
pub fn grad_cam<T: Scalar>(model: &mut Model<T>, x: &Tensor<T>, target: Option<ClassLabel>) -> Result<CamResult> {
    if x.shape().first() != Some(&1) {
        return Err(Error::shape(format!("Grad-CAM explains one image, got batch shape {:?}", x.shape())));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let pass = model.forward(&mut tape, xv, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
    let captured = pass.captured.ok_or(Error::UnsupportedModel)?;
    let logits: Vec<f64> = tape.data(pass.logits).iter().map(|v| v.as_f64()).collect();
    let target = match target {
        Some(t) => t,
        None => ClassLabel::from_id(crate::nn::argmax(&logits))?,
    };
    let shape = tape.shape(captured).to_vec();
    let (k, h, w) = (shape[1], shape[2], shape[3]);
    let score = tape.gather(pass.logits, &[target.id()])?;
    let grads = tape.backward(score)?;
    let a: Vec<f64> = tape.data(captured).iter().map(|v| v.as_f64()).collect();
    let da: Vec<f64> = match grads.get(captured) {
        Some(g) => g.iter().map(|v| v.as_f64()).collect(),
        None => vec![0.0; a.len()],
    };
    let mut out = cam_from(&a, &da, k, h, w, target);
    out.logits = logits;
    Ok(out)
}

/// Bilinear resampling with corner alignment: the corner samples of the
/// output coincide with those of the input.
pub fn upsample_bilinear(cam: &CamMap, width: usize, height: usize) -> CamMap {
    let coord = |i: usize, n: usize, new_n: usize| -> (usize, usize, f64) {
        if new_n == 1 || n == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n - 1) as f64 / (new_n - 1) as f64;
        let lo = (libm::floor(pos) as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, cam.height, height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, cam.width, width);
            let top = cam.at(x0, y0) * (1.0 - fx) + cam.at(x1, y0) * fx;
            let bottom = cam.at(x0, y1) * (1.0 - fx) + cam.at(x1, y1) * fx;
            values.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    CamMap { width, height, values, target: cam.target }
}

const STOPS: [[f64; 3]; 4] = [[0.0, 0.0, 255.0], [0.0, 255.0, 0.0], [255.0, 255.0, 0.0], [255.0, 0.0, 0.0]];

/// Blue → green → yellow → red, piecewise linear with stops at 0, 1/3,
/// 2/3 and 1.
pub fn colormap(v: f64) -> [u8; 3] {
    let t = v.clamp(0.0, 1.0) * 3.0;
    let i = (libm::floor(t) as usize).min(2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    core::array::from_fn(|c| libm::round(a[c] + (b[c] - a[c]) * f) as u8)
}

/// Color image of a map.
pub fn colorize(cam: &CamMap) -> PixelGrid {
    PixelGrid::from_fn_rgb(cam.width, cam.height, |x, y| colormap(cam.at(x, y)))
}

/// `(1 − alpha)·image + alpha·colormap(cam)` per pixel; `cam` is resampled
/// to the image size when they differ.
pub fn overlay(image: &PixelGrid, cam: &CamMap, alpha: f64) -> Result<PixelGrid> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("overlay alpha {alpha} outside [0, 1]")));
    }
    let rgb = image.to_rgb();
    let cam = if cam.width == rgb.width() && cam.height == rgb.height() {
        cam.clone()
    } else {
        upsample_bilinear(cam, rgb.width(), rgb.height())
    };
    Ok(PixelGrid::from_fn_rgb(rgb.width(), rgb.height(), |x, y| {
        let src = rgb.pixel(x, y);
        let col = colormap(cam.at(x, y));
        core::array::from_fn(|c| libm::round((1.0 - alpha) * src[c] as f64 + alpha * col[c] as f64) as u8)
    }))
}

/// Original, colorized weighted sum (min-max scaled, before the ReLU) and
/// overlay side by side, each `size × size`.
pub fn triptych(image: &PixelGrid, result: &CamResult, size: usize, alpha: f64) -> Result<PixelGrid> {
    let original = image.to_rgb().resize(size, size);
    let (lo, hi) = result.weighted.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    let middle_values = result.weighted.iter().map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect();
    let middle = CamMap { values: middle_values, ..result.map.clone() };
    let middle = colorize(&upsample_bilinear(&middle, size, size));
    let right = overlay(&original, &upsample_bilinear(&result.map, size, size), alpha)?;
    let panels = [original, middle, right];
    Ok(PixelGrid::from_fn_rgb(3 * size, size, |x, y| {
        let p = panels[x / size].pixel(x % size, y);
        [p[0], p[1], p[2]]
    }))
}
