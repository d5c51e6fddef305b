//! Per-image classification scores for a folder of images.

use std::path::{Path, PathBuf};

use gmf_core::data::{preprocess, PreprocessConfig};
use gmf_core::eval::{Classifier, ScoreRecord};
use gmf_core::Mode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use crate::codec::{decode_image, is_image_path};
use crate::error::{Error, Result};
use crate::manifest::folder_label;
use crate::report::ScoreRow;
use crate::workers::par_map;

/// Image files below `folder`, sorted by their relative path.
pub fn list_images(folder: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(folder).min_depth(1) {
        let entry = entry.map_err(|e| Error::format(folder, e))?;
        if entry.file_type().is_file() && is_image_path(entry.path()) {
            let rel = entry.path().strip_prefix(folder).unwrap_or(entry.path());
            let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.push((name, entry.path().to_path_buf()));
        }
    }
    out.sort();
    Ok(out)
}

/// Scores every image below `folder` in path order. Images inside a class
/// folder (`3_anger/...`) carry that label. Files that fail to decode get
/// a row with the error in place of scores.
pub fn score_folder<C: Classifier + ?Sized>(
    clf: &mut C,
    folder: &Path,
    config: &PreprocessConfig,
    workers: usize,
) -> Result<Vec<ScoreRow>> {
    let files = list_images(folder)?;
    let decoded = par_map(&files, workers, |(_, path)| decode_image(path));
    let mut rows = Vec::with_capacity(files.len());
    for ((name, _), img) in files.into_iter().zip(decoded) {
        let label = name.split('/').next().filter(|_| name.contains('/')).and_then(folder_label);
        let result = match img {
            Ok(img) => {
                let x = preprocess(&img, config, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0));
                let mut shape = vec![1];
                shape.extend_from_slice(x.shape());
                let logits = clf.logits(&x.reshape(&shape)?)?;
                Ok(ScoreRecord::from_logits(name.clone(), label, logits.data())?)
            }
            Err(e) => {
                log::warn!("{e}");
                Err(match e {
                    Error::Decode { reason, .. } => reason,
                    other => other.to_string(),
                })
            }
        };
        rows.push(ScoreRow { path: name, label, result });
    }
    Ok(rows)
}
