use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// 8-bit image in row-major, channel-interleaved order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl PixelGrid {
    /// `channels` must be 1 (gray) or 3 (RGB).
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(PixelGrid { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels]).expect("valid dimensions")
    }

    /// Builds an RGB image from a per-pixel function.
    pub fn from_fn_rgb(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Luma with ITU-R 601 weights, unrounded, in `0..=255`.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.iter().map(|&v| v as f32).collect(),
            _ => self.data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        }
    }

    /// Single-channel copy, luma rounded to the nearest byte.
    pub fn to_gray(&self) -> PixelGrid {
        let data = self.luma().into_iter().map(|v| libm::roundf(v).clamp(0.0, 255.0) as u8).collect();
        PixelGrid { width: self.width, height: self.height, channels: 1, data }
    }

    /// Three-channel copy; gray values are replicated.
    pub fn to_rgb(&self) -> PixelGrid {
        match self.channels {
            3 => self.clone(),
            _ => {
                PixelGrid { width: self.width, height: self.height, channels: 3, data: self.data.iter().flat_map(|&v| [v, v, v]).collect() }
            }
        }
    }

    /// Bilinear resize of every channel.
    pub fn resize(&self, width: usize, height: usize) -> PixelGrid {
        let c = self.channels;
        let planes: Vec<Vec<f32>> = (0..c)
            .map(|k| {
                let plane: Vec<f32> = self.data.iter().skip(k).step_by(c).map(|&v| v as f32).collect();
                resize_bilinear(&plane, self.width, self.height, width, height)
            })
            .collect();
        let mut data = Vec::with_capacity(width * height * c);
        for i in 0..width * height {
            data.extend(planes.iter().map(|p| libm::roundf(p[i]).clamp(0.0, 255.0) as u8));
        }
        PixelGrid { width, height, channels: c, data }
    }

    /// Copy of the rectangle at `(x, y)` of size `w × h`, which must lie
    /// inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<PixelGrid> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::shape(format!("crop {w}x{h}+{x}+{y} outside {}x{} image", self.width, self.height)));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(PixelGrid { width: w, height: h, channels: c, data })
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> f32 {
    0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32
}

/// Bilinear resampling of a single-channel `w × h` plane with pixel
/// centers at half-integer coordinates and edge clamping.
pub fn resize_bilinear(src: &[f32], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    assert_eq!(src.len(), w * h, "plane size");
    if w == nw && h == nh {
        return src.to_vec();
    }
    let axis = |n: usize, new_n: usize| -> Vec<(usize, usize, f32)> {
        let scale = n as f32 / new_n as f32;
        (0..new_n)
            .map(|i| {
                let pos = ((i as f32 + 0.5) * scale - 0.5).max(0.0);
                let lo = (libm::floorf(pos) as usize).min(n - 1);
                let hi = (lo + 1).min(n - 1);
                (lo, hi, pos - lo as f32)
            })
            .collect()
    };
    let xs = axis(w, nw);
    let ys = axis(h, nh);
    let mut out = Vec::with_capacity(nw * nh);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}
