//! Class-folder scanning and the `path,label` manifest CSV.

use std::path::{Path, PathBuf};

use gmf_core::data::{ClassLabel, DatasetManifest, ManifestRow};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::codec::is_image_path;
use crate::error::{self, Error, Result};

/// Result of [`scan_folders`]: the manifest plus the entries that were
/// ignored, with reasons.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanReport {
    pub manifest: DatasetManifest,
    pub skipped: Vec<String>,
}

/// Class id encoded by a folder name such as `3_anger`: the leading run of
/// digits, which must be a single id in `0..=5`.
pub fn folder_label(name: &str) -> Option<ClassLabel> {
    let digits: String = name.chars().take_while(char::is_ascii_digit).collect();
    if digits.len() != 1 {
        return None;
    }
    ClassLabel::from_id(digits.parse().ok()?).ok()
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// One row per image below each class folder of `root`, sorted by path.
/// Folders without a valid leading class digit are skipped with a warning.
pub fn scan_folders(root: &Path) -> Result<ScanReport> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(label) = folder_label(&name) else {
            log::warn!("skipping folder {name:?}: name does not start with a class id 0-5");
            skipped.push(format!("{name}: no class id"));
            continue;
        };
        for entry in WalkDir::new(&dir).min_depth(1).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::format(&dir, e))?;
            if entry.file_type().is_file() && is_image_path(entry.path()) {
                rows.push(ManifestRow { path: relative(root, entry.path()), label });
            }
        }
    }
    if rows.is_empty() {
        return Err(gmf_core::Error::EmptyManifest.into());
    }
    rows.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(ScanReport { manifest: DatasetManifest::new(rows)?, skipped })
}

#[derive(Deserialize)]
struct Record {
    path: String,
    label: usize,
}

fn writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub(crate) fn csv_bytes<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut w = writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

/// CSV text of `manifest` with a `path,label` header.
pub fn manifest_csv(manifest: &DatasetManifest) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(["path", "label"]).expect("in-memory CSV");
    for row in &manifest.rows {
        w.write_record([row.path.as_str(), &row.label.id().to_string()]).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    error::write(path, &manifest_csv(manifest))
}

/// Reads a manifest. Row paths stay relative; [`resolve`] joins them with
/// the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = error::read(path)?;
    let mut reader = csv::Reader::from_reader(text.as_slice());
    let headers = reader.headers().map_err(|e| Error::format(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(Error::format(path, format!("expected header path,label, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<Record>().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let label = ClassLabel::from_id(rec.label).map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        rows.push(ManifestRow { path: rec.path, label });
    }
    DatasetManifest::new(rows).map_err(|e| Error::format(path, e))
}

/// Location of a manifest row on disk.
pub fn resolve(manifest_path: &Path, row: &ManifestRow) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new("")).join(&row.path)
}
