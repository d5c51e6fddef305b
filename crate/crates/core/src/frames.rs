//! Per-frame face classification and annotation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{preprocess, ClassLabel, PixelGrid, PreprocessConfig};
use crate::detect::{crop_faces, detect_multiscale, Cascade, DetectParams, Detection};
use crate::eval::{Classifier, ScoreRecord};
use crate::gradcam::{colormap, upsample_bilinear, CamMap};
use crate::raster::{draw_rect, draw_text, fill_rect, text_width, Rgb, ADVANCE, BLACK, GREEN, WHITE};
use crate::{Mode, Result, NUM_CLASSES};

pub trait FaceDetector {
    fn detect(&self, image: &PixelGrid) -> Vec<Detection>;
}

/// A cascade with fixed scan parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeDetector {
    pub cascade: Cascade,
    pub params: DetectParams,
}

impl FaceDetector for CascadeDetector {
    fn detect(&self, image: &PixelGrid) -> Vec<Detection> {
        detect_multiscale(&self.cascade, image, &self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    /// Fraction of the box size added on each side before cropping.
    pub margin: f64,
    pub gradcam: bool,
    pub cam_alpha: f64,
    pub preprocess: PreprocessConfig,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions { margin: 0.0, gradcam: false, cam_alpha: 0.4, preprocess: PreprocessConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceResult {
    pub detection: Detection,
    pub record: ScoreRecord,
    pub cam: Option<CamMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub faces: Vec<FaceResult>,
}

impl FrameResult {
    /// Prediction for the largest face; the earliest one on ties.
    pub fn top_emotion(&self) -> Option<ClassLabel> {
        self.faces.iter().enumerate().max_by_key(|(i, f)| (f.detection.area(), core::cmp::Reverse(*i))).map(|(_, f)| f.record.pred)
    }
}

pub const BAR_COLORS: [Rgb; NUM_CLASSES] = [[255, 215, 0], [255, 140, 0], [30, 144, 255], [220, 20, 60], [148, 0, 211], [160, 160, 160]];

const BAR_HEIGHT: usize = 3;
const BAR_GAP: usize = 1;

/// Detects, classifies and draws every face of one frame. A frame without
/// faces is returned unchanged.
pub fn process_frame<D, C>(
    index: usize,
    name: &str,
    image: &PixelGrid,
    detector: &D,
    clf: &mut C,
    opts: &AnnotateOptions,
) -> Result<(FrameResult, PixelGrid)>
where
    D: FaceDetector + ?Sized,
    C: Classifier + ?Sized,
{
    let detections = detector.detect(image);
    let mut faces = Vec::new();
    for (det, crop) in crop_faces(image, &detections, opts.margin) {
        let sample = preprocess(&crop, &opts.preprocess, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0));
        let mut shape = vec![1];
        shape.extend_from_slice(sample.shape());
        let x = sample.reshape(&shape)?;
        let logits = clf.logits(&x)?;
        let record = ScoreRecord::from_logits(String::from(name), None, logits.data())?;
        let cam = if opts.gradcam { clf.explain(&x, Some(record.pred))?.map(|r| r.map) } else { None };
        faces.push(FaceResult { detection: det, record, cam });
    }
    let result = FrameResult { index, faces };
    if result.faces.is_empty() {
        return Ok((result, image.clone()));
    }
    let mut out = image.to_rgb();
    for face in &result.faces {
        draw_face(&mut out, face, opts.cam_alpha);
    }
    Ok((result, out))
}

/// CAM blended into the box, a 2-pixel green outline, the predicted class
/// name above the box (inside it when there is no room) and one score bar
/// per class along the bottom of the box.
pub fn draw_face(img: &mut PixelGrid, face: &FaceResult, cam_alpha: f64) {
    let d = face.detection;
    let (w, h) = (d.width.min(img.width() - d.x), d.height.min(img.height() - d.y));
    if let Some(cam) = &face.cam {
        let up = upsample_bilinear(cam, w, h);
        for yy in 0..h {
            for xx in 0..w {
                let col = colormap(up.at(xx, yy));
                let i = ((d.y + yy) * img.width() + d.x + xx) * 3;
                let px = &mut img.data_mut()[i..i + 3];
                for c in 0..3 {
                    px[c] = libm::round((1.0 - cam_alpha) * px[c] as f64 + cam_alpha * col[c] as f64) as u8;
                }
            }
        }
    }
    let (x, y) = (d.x as isize, d.y as isize);
    draw_rect(img, x, y, w, h, 2, GREEN);

    let name = face.record.pred.name();
    let (tx, ty, label) = if d.y >= 9 {
        (x, y - 8, name)
    } else {
        let fits = (w.saturating_sub(8) + 1) / ADVANCE;
        (x + 3, y + 4, &name[..fits.min(name.len())])
    };
    if !label.is_empty() {
        fill_rect(img, tx, ty - 1, text_width(label, 1) + 2, 9, BLACK);
        draw_text(img, tx + 1, ty, label, 1, WHITE);
    }

    let bars = NUM_CLASSES * (BAR_HEIGHT + BAR_GAP);
    if h < bars + 16 || w < 12 {
        return;
    }
    let max_len = (w - 8) / 2;
    let top = y + (h - 4 - bars) as isize;
    for (k, &s) in face.record.scores.iter().enumerate() {
        let len = libm::round(s.clamp(0.0, 1.0) * max_len as f64) as usize;
        let by = top + (k * (BAR_HEIGHT + BAR_GAP)) as isize;
        fill_rect(img, x + 4, by, len, BAR_HEIGHT, BAR_COLORS[k]);
    }
}

/// Label shown at each frame: during the first window the running mode of
/// the frames seen so far, afterwards the mode of the most recently
/// completed window, refreshed every `window` frames. Frames without a
/// prediction are ignored; ties go to the lowest class id.
pub fn smooth_top_emotion(preds: &[Option<ClassLabel>], window: usize) -> Vec<Option<ClassLabel>> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(preds.len());
    let mut shown = None;
    for i in 0..preds.len() {
        let done = (i + 1) / window * window;
        let span = if done == 0 { &preds[..=i] } else { &preds[done - window..done] };
        if done == 0 || done == i + 1 {
            if let Some(m) = mode(span) {
                shown = Some(m);
            }
        }
        out.push(shown);
    }
    out
}

fn mode(span: &[Option<ClassLabel>]) -> Option<ClassLabel> {
    let mut counts = [0usize; NUM_CLASSES];
    span.iter().flatten().for_each(|l| counts[l.id()] += 1);
    let best = counts.iter().enumerate().max_by_key(|&(i, &n)| (n, core::cmp::Reverse(i)))?;
    (*best.1 > 0).then(|| ClassLabel::ALL[best.0])
}
