//! CSV outputs: metric logs, per-image scores, detections and grid results.

use std::path::Path;

use gmf_core::data::ClassLabel;
use gmf_core::detect::Detection;
use gmf_core::eval::ScoreRecord;
use gmf_core::train::{EpochMetrics, GridResult};
use gmf_core::NUM_CLASSES;

use crate::error::{self, Result};
use crate::manifest::csv_bytes;

/// `epoch,train_loss,train_acc,valid_acc`, one line per epoch.
pub fn metric_log_csv(history: &[EpochMetrics]) -> Vec<u8> {
    let mut out = b"epoch,train_loss,train_acc,valid_acc\n".to_vec();
    for m in history {
        out.extend(format!("{},{},{},{}\n", m.epoch, m.train_loss, m.train_acc, m.valid_acc).bytes());
    }
    out
}

pub fn write_metric_log(history: &[EpochMetrics], path: &Path) -> Result<()> {
    error::write(path, &metric_log_csv(history))
}

/// One line of a score CSV: either a record or the reason there is none.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub path: String,
    pub label: Option<ClassLabel>,
    pub result: std::result::Result<ScoreRecord, String>,
}

impl ScoreRow {
    pub fn status(&self) -> String {
        match &self.result {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        }
    }
}

pub const SCORE_HEADER: [&str; 10] =
    ["path", "label", "pred", "score_happiness", "score_surprise", "score_sadness", "score_anger", "score_disgust", "score_fear", "status"];

fn scores_or_blank(record: Option<&ScoreRecord>) -> Vec<String> {
    match record {
        Some(r) => r.scores.iter().map(f64::to_string).collect(),
        None => vec![String::new(); NUM_CLASSES],
    }
}

pub fn score_csv(rows: &[ScoreRow]) -> Vec<u8> {
    let mut lines: Vec<Vec<String>> = vec![SCORE_HEADER.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let record = row.result.as_ref().ok();
        let mut line = vec![
            row.path.clone(),
            row.label.map(|l| l.name().to_string()).unwrap_or_default(),
            record.map(|r| r.pred.name().to_string()).unwrap_or_default(),
        ];
        line.extend(scores_or_blank(record));
        line.push(row.status());
        lines.push(line);
    }
    csv_bytes(lines)
}

/// One line of the frame results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRow {
    pub frame: String,
    pub face: Option<(usize, Detection, ScoreRecord)>,
    pub status: String,
}

pub const FRAME_HEADER: [&str; 14] =
    ["frame", "face_idx", "x", "y", "w", "h", "pred", "score_0", "score_1", "score_2", "score_3", "score_4", "score_5", "status"];

pub fn frames_csv(rows: &[FrameRow]) -> Vec<u8> {
    let mut lines: Vec<Vec<String>> = vec![FRAME_HEADER.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut line = vec![row.frame.clone()];
        match &row.face {
            Some((i, d, r)) => {
                line.extend([i, &d.x, &d.y, &d.width, &d.height].map(|v| v.to_string()));
                line.push(r.pred.name().to_string());
                line.extend(scores_or_blank(Some(r)));
            }
            None => line.extend(vec![String::new(); 6 + NUM_CLASSES]),
        }
        line.push(row.status.clone());
        lines.push(line);
    }
    csv_bytes(lines)
}

pub fn detections_csv(dets: &[Detection]) -> Vec<u8> {
    let mut lines = vec![["x", "y", "w", "h", "neighbors"].map(String::from)];
    lines.extend(dets.iter().map(|d| [d.x, d.y, d.width, d.height, d.neighbors].map(|v| v.to_string())));
    csv_bytes(lines)
}

/// Ranked grid results: rank, enumeration index, the configuration, the
/// best validation accuracy and any error.
pub fn grid_csv(results: &[GridResult]) -> Vec<u8> {
    let mut lines = vec![[
        "rank",
        "index",
        "learning_rate",
        "batch_size",
        "dropout",
        "conv_blocks",
        "fc_layers",
        "batch_norm",
        "pooling",
        "optimizer",
        "activation",
        "epochs",
        "early_stopping",
        "patience",
        "best_valid_acc",
        "error",
    ]
    .map(String::from)
    .to_vec()];
    for (rank, r) in results.iter().enumerate() {
        let p = &r.point;
        lines.push(vec![
            (rank + 1).to_string(),
            r.index.to_string(),
            p.learning_rate.to_string(),
            p.batch_size.to_string(),
            p.dropout.to_string(),
            p.conv_blocks.to_string(),
            p.fc_layers.to_string(),
            p.batch_norm.to_string(),
            tag(&p.pooling),
            tag(&p.optimizer),
            tag(&p.activation),
            p.epochs.to_string(),
            p.early_stopping.to_string(),
            p.patience.to_string(),
            r.best_valid_acc.map(|a| a.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    csv_bytes(lines)
}

/// Serialized name of a unit enum variant.
fn tag<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}
