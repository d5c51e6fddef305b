//! Haar cascade face detection over integral images.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::PixelGrid;
use crate::{Error, Result};

/// Cumulative sums with a zero first row and column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u64>,
    squared: Vec<u64>,
}

impl IntegralImage {
    /// Tables of a single-channel image (RGB input is converted to luma).
    pub fn new(img: &PixelGrid) -> Self {
        let gray = if img.channels() == 1 { img.clone() } else { img.to_gray() };
        Self::from_plane(gray.data(), gray.width(), gray.height())
    }

    pub fn from_plane(plane: &[u8], width: usize, height: usize) -> Self {
        assert_eq!(plane.len(), width * height, "plane size");
        let stride = width + 1;
        let mut sums = vec![0u64; stride * (height + 1)];
        let mut squared = vec![0u64; stride * (height + 1)];
        for y in 0..height {
            let (mut row, mut row_sq) = (0u64, 0u64);
            for x in 0..width {
                let v = plane[y * width + x] as u64;
                row += v;
                row_sq += v * v;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
                squared[(y + 1) * stride + x + 1] = squared[y * stride + x + 1] + row_sq;
            }
        }
        IntegralImage { width, height, sums, squared }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry: the sum of all pixels above and left of `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.sums[y * (self.width + 1) + x]
    }

    fn corners(table: &[u64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let a = table[y * stride + x];
        let b = table[y * stride + x + w];
        let c = table[(y + h) * stride + x];
        let d = table[(y + h) * stride + x + w];
        d + a - b - c
    }

    /// Sum of the `w × h` rectangle at `(x, y)`.
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        Self::corners(&self.sums, self.width + 1, x, y, w, h)
    }

    pub fn rect_sq_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        Self::corners(&self.squared, self.width + 1, x, y, w, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub weight: f64,
}

/// Decision stump on one Haar feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub rects: Vec<HaarRect>,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub threshold: f64,
    pub classifiers: Vec<WeakClassifier>,
}

/// A boosted cascade for a fixed base window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub width: usize,
    pub height: usize,
    pub stages: Vec<Stage>,
}

impl Cascade {
    pub fn empty(width: usize, height: usize) -> Self {
        Cascade { width, height, stages: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("cascade window must be non-empty"));
        }
        for (s, stage) in self.stages.iter().enumerate() {
            for wc in &stage.classifiers {
                if wc.rects.is_empty() {
                    return Err(Error::config(format!("stage {s} has a feature without rectangles")));
                }
                for r in &wc.rects {
                    if r.w == 0 || r.h == 0 || r.x + r.w > self.width || r.y + r.h > self.height {
                        return Err(Error::config(format!("stage {s}: rectangle {r:?} leaves the base window")));
                    }
                }
            }
        }
        Ok(())
    }

    fn window(&self, scale: f64) -> (usize, usize) {
        (libm::round(self.width as f64 * scale) as usize, libm::round(self.height as f64 * scale) as usize)
    }
}

fn scaled(v: usize, scale: f64) -> usize {
    libm::round(v as f64 * scale) as usize
}

/// Runs the cascade on the window at `(x, y)` scaled by `scale`. Feature
/// values are rectangle sums divided by the window area; each stump
/// compares against its threshold times the window's standard deviation.
pub fn eval_window(cascade: &Cascade, ii: &IntegralImage, x: usize, y: usize, scale: f64) -> bool {
    let (ww, wh) = cascade.window(scale);
    if ww == 0 || wh == 0 || x + ww > ii.width() || y + wh > ii.height() {
        return false;
    }
    let area = (ww * wh) as f64;
    let mean = ii.rect_sum(x, y, ww, wh) as f64 / area;
    let var = ii.rect_sq_sum(x, y, ww, wh) as f64 / area - mean * mean;
    let sd = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
    for stage in &cascade.stages {
        let mut total = 0.0;
        for wc in &stage.classifiers {
            let mut value = 0.0;
            for r in &wc.rects {
                let (rx, ry) = (x + scaled(r.x, scale), y + scaled(r.y, scale));
                let rw = scaled(r.w, scale).min(x + ww - rx);
                let rh = scaled(r.h, scale).min(y + wh - ry);
                value += r.weight * ii.rect_sum(rx, ry, rw, rh) as f64;
            }
            value /= area;
            total += if value < wc.threshold * sd { wc.left } else { wc.right };
        }
        if total < stage.threshold {
            return false;
        }
    }
    true
}

/// A square face box; `neighbors` counts the raw windows merged into it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub neighbors: usize,
}

impl Detection {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn iou(&self, other: &Detection) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.width).min(other.x + other.width);
        let y1 = (self.y + self.height).min(other.y + other.height);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = ((x1 - x0) * (y1 - y0)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub min_neighbors: usize,
    /// Smallest window side considered, in pixels.
    pub min_size: usize,
    /// Largest window side considered; 0 means the image size.
    pub max_size: usize,
    /// Overlap above which two windows belong to one face.
    pub group_iou: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams { scale_factor: 1.1, min_neighbors: 3, min_size: 0, max_size: 0, group_iou: 0.3 }
    }
}

/// Scale factors and window sizes scanned on a `width × height` image.
pub fn scan_scales(cascade: &Cascade, width: usize, height: usize, params: &DetectParams) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let scale = libm::pow(params.scale_factor, k as f64);
        let (ww, wh) = cascade.window(scale);
        if ww > width || wh > height || (params.max_size > 0 && ww.max(wh) > params.max_size) {
            break;
        }
        if ww.min(wh) >= params.min_size {
            out.push(scale);
        }
        k += 1;
    }
    out
}

/// Every accepted window, ordered by (scale, y, x).
pub fn raw_windows(cascade: &Cascade, ii: &IntegralImage, params: &DetectParams) -> Vec<Detection> {
    let mut out = Vec::new();
    for scale in scan_scales(cascade, ii.width(), ii.height(), params) {
        let (ww, wh) = cascade.window(scale);
        let step = (libm::round(scale) as usize).max(1);
        for y in (0..=ii.height() - wh).step_by(step) {
            for x in (0..=ii.width() - ww).step_by(step) {
                if eval_window(cascade, ii, x, y, scale) {
                    out.push(Detection { x, y, width: ww, height: wh, neighbors: 1 });
                }
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges windows into clusters linked by overlap `>= iou` (transitively)
/// and reports each cluster's mean box with its size as the neighbor
/// count. Clusters with fewer than `min_neighbors` members are dropped.
/// The output is sorted, so it does not depend on the input order.
pub fn group(windows: &[Detection], iou: f64, min_neighbors: usize) -> Vec<Detection> {
    let mut sorted = windows.to_vec();
    sorted.sort();
    let n = sorted.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if sorted[i].iou(&sorted[j]) >= iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut acc: Vec<[usize; 5]> = vec![[0; 5]; n];
    for (i, d) in sorted.iter().enumerate() {
        let root = find(&mut parent, i);
        let a = &mut acc[root];
        a[0] += d.x;
        a[1] += d.y;
        a[2] += d.width;
        a[3] += d.height;
        a[4] += d.neighbors;
    }
    let mut out: Vec<Detection> = acc
        .iter()
        .filter(|a| a[4] > 0 && a[4] >= min_neighbors)
        .map(|a| {
            let m = a[4];
            let mean = |s: usize| (s + m / 2) / m;
            Detection { x: mean(a[0]), y: mean(a[1]), width: mean(a[2]), height: mean(a[3]), neighbors: m }
        })
        .collect();
    out.sort();
    out
}

/// Sliding-window detection at every scale, followed by grouping. With
/// `min_neighbors == 0` the raw windows are returned ungrouped.
pub fn detect_multiscale(cascade: &Cascade, img: &PixelGrid, params: &DetectParams) -> Vec<Detection> {
    let ii = IntegralImage::new(img);
    let raw = raw_windows(cascade, &ii, params);
    if params.min_neighbors == 0 {
        return raw;
    }
    group(&raw, params.group_iou, params.min_neighbors)
}

/// Box grown by `margin` times its size on every side, clamped to the
/// image. Returns `(x, y, w, h)`, or `None` for an empty box.
pub fn expand_box(d: &Detection, margin: f64, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    if d.width == 0 || d.height == 0 || d.x >= width || d.y >= height {
        return None;
    }
    let mx = libm::round(d.width as f64 * margin) as isize;
    let my = libm::round(d.height as f64 * margin) as isize;
    let x0 = (d.x as isize - mx).max(0) as usize;
    let y0 = (d.y as isize - my).max(0) as usize;
    let x1 = ((d.x + d.width) as isize + mx).min(width as isize) as usize;
    let y1 = ((d.y + d.height) as isize + my).min(height as isize) as usize;
    (x1 > x0 && y1 > y0).then(|| (x0, y0, x1 - x0, y1 - y0))
}

/// Crops each detection (grown by `margin`) out of `img`. Empty boxes are
/// skipped.
pub fn crop_faces(img: &PixelGrid, detections: &[Detection], margin: f64) -> Vec<(Detection, PixelGrid)> {
    detections
        .iter()
        .filter_map(|d| match expand_box(d, margin, img.width(), img.height()) {
            Some((x, y, w, h)) => Some((*d, img.crop(x, y, w, h).expect("box clamped to the image"))),
            None => {
                log::warn!("skipping empty detection {d:?}");
                None
            }
        })
        .collect()
}
