//! Per-(utterance, model) metric score tables and their CSV round-trip.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use crate::error::{AuditError, Result};
use crate::metrics::{MetricVector, METRIC_NAMES};

/// Fixed score CSV column order.
pub const SCORE_COLUMNS: [&str; 8] =
    ["sample_id", "model_id", "wer", "cer", "mer", "wil", "ember", "semdist"];

/// One scored (utterance, model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: String,
    pub model_id: String,
    pub metrics: MetricVector,
}

/// Metric scores, ordered by (manifest order, sorted model id).
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Sorted unique model ids.
    pub fn model_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.model_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Unique sample ids in first-appearance order.
    pub fn sample_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            if seen.insert(row.sample_id.as_str()) {
                out.push(row.sample_id.clone());
            }
        }
        out
    }

    /// Column of one metric across all rows, in row order.
    pub fn metric_values(&self, metric: &str) -> Result<Vec<f64>> {
        if !METRIC_NAMES.contains(&metric) {
            return Err(AuditError::input(format!("unknown metric {metric:?}")));
        }
        Ok(self.rows.iter().map(|r| r.metrics.get(metric)).collect())
    }
}

/// 9 significant digits, the score CSV serialization precision.
fn fmt_score(v: f64) -> String {
    format!("{v:.8e}")
}

/// Write the score table as CSV with the fixed column order.
pub fn write_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(SCORE_COLUMNS)
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for row in &table.rows {
        let m = &row.metrics;
        writer
            .write_record([
                row.sample_id.as_str(),
                row.model_id.as_str(),
                &fmt_score(m.wer),
                &fmt_score(m.cer),
                &fmt_score(m.mer),
                &fmt_score(m.wil),
                &fmt_score(m.ember),
                &fmt_score(m.semdist),
            ])
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

/// Read a score CSV back; the header must match the schema exactly.
pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| AuditError::parse(path, 1, e.to_string()))?
        .clone();
    for expected in SCORE_COLUMNS {
        if !headers.iter().any(|h| h == expected) {
            return Err(AuditError::schema(path, format!("missing column {expected:?}")));
        }
    }
    if headers.len() != SCORE_COLUMNS.len() {
        return Err(AuditError::schema(
            path,
            format!("expected {} columns, got {}", SCORE_COLUMNS.len(), headers.len()),
        ));
    }
    let idx: Vec<usize> = SCORE_COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).unwrap())
        .collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AuditError::parse(path, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| {
                AuditError::parse(
                    path,
                    line,
                    format!("non-numeric {} value {:?}", SCORE_COLUMNS[i], field(i)),
                )
            })
        };
        rows.push(ScoreRow {
            sample_id: field(0).to_owned(),
            model_id: field(1).to_owned(),
            metrics: MetricVector {
                wer: number(2)?,
                cer: number(3)?,
                mer: number(4)?,
                wil: number(5)?,
                ember: number(6)?,
                semdist: number(7)?,
                flags: Default::default(),
            },
        });
    }
    Ok(ScoreTable { rows })
}
