//! Annotation of a directory of frames.

use std::path::{Path, PathBuf};

use gmf_core::data::{ClassLabel, PixelGrid};
use gmf_core::eval::Classifier;
use gmf_core::frames::{process_frame, smooth_top_emotion, AnnotateOptions, FaceDetector, FrameResult};
use gmf_core::raster::{draw_text, fill_rect, text_width, BLACK, WHITE};

use crate::codec::{decode_image, is_image_path, save_image};
use crate::error::{self, Error, Result};
use crate::report::{frames_csv, FrameRow};
use crate::workers::par_map_with;

/// Frame files directly inside `dir`, sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Output name of an annotated frame.
pub fn annotated_name(frame: &Path) -> String {
    let stem = frame.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    format!("{stem}_annotated.png")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotateReport {
    pub rows: Vec<FrameRow>,
    /// Smoothed top emotion per readable frame, in frame order.
    pub top: Vec<Option<ClassLabel>>,
    pub frames: usize,
    pub failed: usize,
}

/// Writes the smoothed label in the bottom-left corner.
fn stamp_top(img: &mut PixelGrid, label: ClassLabel) {
    let text = label.name().to_ascii_uppercase();
    let y = img.height() as isize - 10;
    fill_rect(img, 0, y, text_width(&text, 1) + 4, 10, BLACK);
    draw_text(img, 2, y + 2, &text, 1, WHITE);
}

fn rows_for(name: &str, result: &FrameResult) -> Vec<FrameRow> {
    if result.faces.is_empty() {
        return vec![FrameRow { frame: name.into(), face: None, status: "no_face".into() }];
    }
    result
        .faces
        .iter()
        .enumerate()
        .map(|(i, f)| FrameRow { frame: name.into(), face: Some((i, f.detection, f.record.clone())), status: "ok".into() })
        .collect()
}

/// Detects, classifies and draws every frame of `frames_dir` into
/// `out_dir`, one `<stem>_annotated.png` per readable frame, plus
/// `results.csv`. Frames with faces also show the top emotion smoothed
/// over `window` frames. Unreadable frames are reported in the CSV and
/// skipped. Each entry of `classifiers` serves one worker thread.
pub fn annotate_frames<D, C>(
    frames_dir: &Path,
    out_dir: &Path,
    detector: &D,
    classifiers: &mut [C],
    opts: &AnnotateOptions,
    window: usize,
) -> Result<AnnotateReport>
where
    D: FaceDetector + Sync + ?Sized,
    C: Classifier + Send,
{
    let frames = list_frames(frames_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::new();
    let mut preds = Vec::new();
    let mut top = Vec::new();
    let mut failed = 0;
    let indexed: Vec<(usize, &PathBuf)> = frames.iter().enumerate().collect();
    for chunk in indexed.chunks(classifiers.len().max(1) * 4) {
        let done =
            par_map_with(chunk, classifiers, |clf, &(index, path)| -> Result<std::result::Result<(FrameResult, PixelGrid), String>> {
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                match decode_image(path) {
                    Ok(img) => Ok(Ok(process_frame(index, &name, &img, detector, clf, opts)?)),
                    Err(e) => {
                        log::warn!("{e}");
                        Ok(Err(e.to_string()))
                    }
                }
            });
        for ((_, path), outcome) in chunk.iter().zip(done) {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let (result, mut img) = match outcome? {
                Ok(done) => done,
                Err(reason) => {
                    failed += 1;
                    rows.push(FrameRow { frame: name, face: None, status: format!("error: {reason}") });
                    continue;
                }
            };
            rows.extend(rows_for(&name, &result));
            preds.push(result.top_emotion());
            let shown = *smooth_top_emotion(&preds, window).last().expect("one entry per frame");
            top.push(shown);
            if let (false, Some(label)) = (result.faces.is_empty(), shown) {
                stamp_top(&mut img, label);
            }
            save_image(&img, &out_dir.join(annotated_name(path)))?;
        }
    }
    error::write(&out_dir.join("results.csv"), &frames_csv(&rows))?;
    Ok(AnnotateReport { rows, top, frames: frames.len(), failed })
}
