//! Manifest, embedding and score-table ingestion.
//!
//! Loading is single-threaded and deterministic; loaded tables are immutable
//! afterward and safe to share across readers. Every record either loads or
//! produces a diagnostic with a line number.

mod embeddings;
mod scores;
mod sidecar;

pub use embeddings::{load_embeddings, CaseMode, EmbeddingTable};
pub use scores::{read_scores, write_scores, ScoreRow, ScoreTable, SCORE_COLUMNS};
pub use sidecar::{load_sentence_vectors, SentenceVectors};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Speaker sex metadata; unrecognized or missing values stay `Unknown` so
/// audits report coverage honestly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    #[default]
    Unknown,
}

/// First-language status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L1 {
    Native,
    Nonnative,
    #[default]
    Unknown,
}

/// Typical vs. atypical speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Typicality {
    Typical,
    Atypical,
    #[default]
    Unknown,
}

macro_rules! level_str {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    "" => Ok(Default::default()),
                    other => Err(format!("unrecognized level {other:?}")),
                }
            }
        }
    };
}

level_str!(Sex, Sex::Female => "female", Sex::Male => "male", Sex::Unknown => "unknown");
level_str!(L1, L1::Native => "native", L1::Nonnative => "nonnative", L1::Unknown => "unknown");
level_str!(Typicality, Typicality::Typical => "typical", Typicality::Atypical => "atypical",
           Typicality::Unknown => "unknown");

/// One audited sample: reference text, per-model hypotheses and metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub sample_id: String,
    pub speaker_id: String,
    pub dataset_id: String,
    pub reference: String,
    /// model_id -> hypothesis text; ordered so iteration is deterministic.
    pub hypotheses: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_raw: Option<String>,
    #[serde(default)]
    pub sex: Sex,
    #[serde(default)]
    pub l1: L1,
    #[serde(default)]
    pub typicality: Typicality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

/// Manifest file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestFormat {
    Jsonl,
    Csv,
}

impl FromStr for ManifestFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(ManifestFormat::Jsonl),
            "csv" => Ok(ManifestFormat::Csv),
            other => Err(format!("unrecognized manifest format {other:?}")),
        }
    }
}

impl ManifestFormat {
    /// Guess from the file extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> ManifestFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ManifestFormat::Csv,
            _ => ManifestFormat::Jsonl,
        }
    }
}

/// Parse an audit manifest into validated records, preserving row order.
pub fn load_manifest(path: &Path, format: ManifestFormat) -> Result<Vec<UtteranceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let numbered = match format {
        ManifestFormat::Jsonl => parse_jsonl(path, &text)?,
        ManifestFormat::Csv => parse_csv(path, &text)?,
    };
    validate_records(path, &numbered)?;
    Ok(numbered.into_iter().map(|(_, r)| r).collect())
}

fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<(usize, UtteranceRecord)>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord = serde_json::from_str(line)
            .map_err(|e| AuditError::parse(path, line_no, e.to_string()))?;
        records.push((line_no, record));
    }
    Ok(records)
}

const CSV_FIXED_COLUMNS: [&str; 11] = [
    "sample_id",
    "speaker_id",
    "dataset_id",
    "reference",
    "duration_s",
    "audio_path",
    "age_raw",
    "sex",
    "l1",
    "typicality",
    "snr_db",
];

fn parse_csv(path: &Path, text: &str) -> Result<Vec<(usize, UtteranceRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| AuditError::parse(path, 1, e.to_string()))?
        .clone();

    let mut column_of: HashMap<&str, usize> = HashMap::new();
    let mut hyp_columns: Vec<(usize, String)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(model) = h.strip_prefix("hyp__") {
            if model.is_empty() {
                return Err(AuditError::schema(path, "empty model id in `hyp__` column"));
            }
            hyp_columns.push((i, model.to_owned()));
        } else if CSV_FIXED_COLUMNS.contains(&h) {
            column_of.insert(headers.iter().nth(i).unwrap(), i);
        } else {
            return Err(AuditError::schema(path, format!("unrecognized column {h:?}")));
        }
    }
    for required in ["sample_id", "speaker_id", "dataset_id", "reference"] {
        if !column_of.contains_key(required) {
            return Err(AuditError::schema(path, format!("missing column {required:?}")));
        }
    }
    if hyp_columns.is_empty() {
        return Err(AuditError::schema(path, "no `hyp__<model_id>` columns"));
    }

    let get = |row: &csv::StringRecord, name: &str| -> Option<String> {
        column_of
            .get(name)
            .and_then(|&i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| AuditError::parse(path, 0, e.to_string()))?;
        let line_no = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_field = |field: &str, msg: String| AuditError::parse(path, line_no, format!("{field}: {msg}"));

        let mut hypotheses = BTreeMap::new();
        for (i, model) in &hyp_columns {
            if let Some(text) = row.get(*i) {
                if !text.is_empty() {
                    hypotheses.insert(model.clone(), text.to_owned());
                }
            }
        }
        let duration_s = get(&row, "duration_s")
            .map(|s| s.parse::<f64>().map_err(|e| parse_field("duration_s", e.to_string())))
            .transpose()?;
        let snr_db = get(&row, "snr_db")
            .map(|s| s.parse::<f64>().map_err(|e| parse_field("snr_db", e.to_string())))
            .transpose()?;
        let sex = get(&row, "sex")
            .map(|s| Sex::from_str(&s).map_err(|e| parse_field("sex", e)))
            .transpose()?
            .unwrap_or_default();
        let l1 = get(&row, "l1")
            .map(|s| L1::from_str(&s).map_err(|e| parse_field("l1", e)))
            .transpose()?
            .unwrap_or_default();
        let typicality = get(&row, "typicality")
            .map(|s| Typicality::from_str(&s).map_err(|e| parse_field("typicality", e)))
            .transpose()?
            .unwrap_or_default();

        let record = UtteranceRecord {
            sample_id: get(&row, "sample_id").unwrap_or_default(),
            speaker_id: get(&row, "speaker_id").unwrap_or_default(),
            dataset_id: get(&row, "dataset_id").unwrap_or_default(),
            reference: column_of
                .get("reference")
                .and_then(|&i| row.get(i))
                .unwrap_or_default()
                .to_owned(),
            hypotheses,
            duration_s,
            audio_path: get(&row, "audio_path").map(PathBuf::from),
            age_raw: get(&row, "age_raw"),
            sex,
            l1,
            typicality,
            snr_db,
        };
        records.push((line_no, record));
    }
    Ok(records)
}

/// Enforce the record invariants: non-empty ids, unique sample ids, a
/// consistent model set across all rows, finite positive durations.
fn validate_records(path: &Path, records: &[(usize, UtteranceRecord)]) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut model_set: Option<(usize, BTreeSet<&str>)> = None;
    for (line, record) in records {
        if record.sample_id.is_empty() {
            return Err(AuditError::parse(path, *line, "empty sample_id"));
        }
        if record.speaker_id.is_empty() {
            return Err(AuditError::parse(path, *line, "empty speaker_id"));
        }
        if record.dataset_id.is_empty() {
            return Err(AuditError::parse(path, *line, "empty dataset_id"));
        }
        if record.hypotheses.is_empty() {
            return Err(AuditError::parse(
                path,
                *line,
                format!("record {:?} carries no hypotheses", record.sample_id),
            ));
        }
        if let Some(prev) = seen.insert(&record.sample_id, *line) {
            return Err(AuditError::parse(
                path,
                *line,
                format!("duplicate sample_id {:?} (first seen at line {prev})", record.sample_id),
            ));
        }
        if let Some(d) = record.duration_s {
            if !d.is_finite() || d <= 0.0 {
                return Err(AuditError::parse(
                    path,
                    *line,
                    format!("non-positive duration_s {d} for {:?}", record.sample_id),
                ));
            }
        }
        let models: BTreeSet<&str> = record.hypotheses.keys().map(String::as_str).collect();
        match &model_set {
            None => model_set = Some((*line, models)),
            Some((first_line, expected)) => {
                if *expected != models {
                    return Err(AuditError::parse(
                        path,
                        *line,
                        format!(
                            "inconsistent model set for {:?}: expected {:?} (from line {first_line}), got {:?}",
                            record.sample_id,
                            expected.iter().collect::<Vec<_>>(),
                            models.iter().collect::<Vec<_>>()
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The sorted model-id set shared by all records.
pub fn model_ids(records: &[UtteranceRecord]) -> Vec<String> {
    records
        .first()
        .map(|r| r.hypotheses.keys().cloned().collect())
        .unwrap_or_default()
}
