//! Augmentations of a `[C, H, W]` image with values in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One random augmentation, applied in list order during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Augmentation {
    HorizontalFlip { p: f64 },
    Rotation { max_degrees: f64 },
    Crop { padding: usize },
    Erasing { p: f64, min_area: f64, max_area: f64 },
}

impl Augmentation {
    /// The four augmentations with their default parameters.
    pub fn standard() -> Vec<Augmentation> {
        vec![
            Augmentation::HorizontalFlip { p: 0.5 },
            Augmentation::Rotation { max_degrees: 10.0 },
            Augmentation::Crop { padding: 4 },
            Augmentation::Erasing { p: 0.5, min_area: 0.02, max_area: 0.2 },
        ]
    }
}

/// Mutable view of a channel-major image.
pub struct Planes<'a> {
    pub data: &'a mut [f32],
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Planes<'_> {
    fn planes(&mut self) -> core::slice::ChunksExactMut<'_, f32> {
        let n = self.height * self.width;
        self.data.chunks_exact_mut(n)
    }
}

pub fn hflip(img: &mut Planes<'_>) {
    let w = img.width;
    for plane in img.planes() {
        plane.chunks_exact_mut(w).for_each(|row| row.reverse());
    }
}

/// Rotates counter-clockwise by `degrees` about the image center with
/// bilinear sampling; pixels that map outside the source become 0.
pub fn rotate(img: &mut Planes<'_>, degrees: f64) {
    let (h, w) = (img.height, img.width);
    let (sin, cos) = libm::sincos(degrees.to_radians());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    for plane in img.planes() {
        let src = plane.to_vec();
        let at = |x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                src[y as usize * w + x as usize] as f64
            }
        };
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                // inverse mapping: rotate the destination back into the source
                let sx = cos * dx - sin * dy + cx;
                let sy = sin * dx + cos * dy + cy;
                let (x0, y0) = (libm::floor(sx), libm::floor(sy));
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = (at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx) * (1.0 - fy)
                    + (at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx) * fy;
                plane[y * w + x] = v as f32;
            }
        }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Reflect-pads by `padding` on every side, then takes the original-size
/// window whose top-left corner is `(ox, oy)` in padded coordinates.
pub fn pad_crop(img: &mut Planes<'_>, padding: usize, ox: usize, oy: usize) {
    assert!(ox <= 2 * padding && oy <= 2 * padding, "crop offset outside padded image");
    let (h, w) = (img.height, img.width);
    for plane in img.planes() {
        let src = plane.to_vec();
        for y in 0..h {
            let sy = reflect((y + oy) as isize - padding as isize, h);
            for x in 0..w {
                let sx = reflect((x + ox) as isize - padding as isize, w);
                plane[y * w + x] = src[sy * w + sx];
            }
        }
    }
}

/// Zeroes the `w × h` rectangle at `(x, y)` in every channel.
pub fn erase(img: &mut Planes<'_>, x: usize, y: usize, w: usize, h: usize) {
    let width = img.width;
    let (x1, y1) = ((x + w).min(img.width), (y + h).min(img.height));
    for plane in img.planes() {
        for row in y..y1 {
            plane[row * width + x..row * width + x1].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Applies `ops` in order, drawing every random choice from `rng`.
pub fn apply<R: Rng + ?Sized>(img: &mut Planes<'_>, ops: &[Augmentation], rng: &mut R) {
    for op in ops {
        match *op {
            Augmentation::HorizontalFlip { p } => {
                if rng.random::<f64>() < p {
                    hflip(img);
                }
            }
            Augmentation::Rotation { max_degrees } => {
                let deg = rng.random_range(-1.0..=1.0) * max_degrees;
                rotate(img, deg);
            }
            Augmentation::Crop { padding } => {
                let ox = rng.random_range(0..=2 * padding);
                let oy = rng.random_range(0..=2 * padding);
                pad_crop(img, padding, ox, oy);
            }
            Augmentation::Erasing { p, min_area, max_area } => {
                if rng.random::<f64>() >= p {
                    continue;
                }
                let area = (img.width * img.height) as f64 * rng.random_range(min_area..=max_area);
                let log_ratio = rng.random_range(libm::log(0.3)..=libm::log(1.0 / 0.3));
                let ratio = libm::exp(log_ratio);
                let eh = (libm::round(libm::sqrt(area * ratio)) as usize).clamp(1, img.height);
                let ew = (libm::round(libm::sqrt(area / ratio)) as usize).clamp(1, img.width);
                let x = rng.random_range(0..=img.width - ew);
                let y = rng.random_range(0..=img.height - eh);
                erase(img, x, y, ew, eh);
            }
        }
    }
}
