//! Acoustic/demographic feature construction.
//!
//! Builds the standardized per-utterance regressor set: z-scored SNR
//! (manifest value or blind estimate), z-scored log duration, z-scored age
//! with mean imputation and a missing indicator, and the categorical
//! demographic levels with "unknown" retained as an explicit level.

mod age;
pub mod wada;
pub mod wav;

pub use age::{parse_age, AgeBinMap};
pub use wada::{amplitude_gap_statistic, wada_snr, WadaTable};
pub use wav::{read_wav_mono, AudioClip};

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::ingest::{Sex, Typicality, UtteranceRecord, L1};

/// Standardized regressors for one utterance, plus the raw values they came
/// from (kept for report summaries).
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub sample_id: String,
    pub speaker_id: String,
    pub dataset_id: String,
    pub snr_db: f64,
    pub log_duration: f64,
    /// Age in years after mean imputation.
    pub age_years: f64,
    pub x_snr: f64,
    pub x_len: f64,
    pub x_age: f64,
    /// 1 exactly when the age was absent or unparseable.
    pub x_miss: f64,
    pub sex: Sex,
    pub l1: L1,
    pub typicality: Typicality,
}

/// Mean and population standard deviation of one standardized column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    /// Population moments of a column; errors if the column is constant.
    pub fn from_column(name: &str, values: &[f64]) -> Result<ColumnStats> {
        if values.is_empty() {
            return Err(AuditError::numerical(format!("empty column {name}")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(AuditError::numerical(format!(
                "constant column {name} (zero variance), cannot standardize"
            )));
        }
        Ok(ColumnStats { mean, std })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }
}

/// Per-column standardization stats, persisted with the audit so the exact
/// transform can be replayed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: BTreeMap<String, ColumnStats>,
    /// Pre-standardization mean substituted for missing ages.
    pub age_imputation_mean: f64,
}

impl StandardizationStats {
    pub fn column(&self, name: &str) -> Result<&ColumnStats> {
        self.columns
            .get(name)
            .ok_or_else(|| AuditError::input(format!("no standardization stats for column {name:?}")))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| AuditError::input(format!("cannot serialize stats: {e}")))?;
        std::fs::write(path, json).map_err(|e| AuditError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<StandardizationStats> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AuditError::schema(path, e.to_string()))
    }
}

/// Where the per-utterance SNR comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrSource {
    /// `snr_db` must be present in the manifest for every record.
    Manifest,
    /// Always estimate from audio.
    Wada,
    /// Trust manifest metadata, estimate only where absent.
    ManifestThenWada,
}

impl FromStr for SnrSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "manifest" => Ok(SnrSource::Manifest),
            "wada" => Ok(SnrSource::Wada),
            "manifest-then-wada" | "manifest_then_wada" => Ok(SnrSource::ManifestThenWada),
            other => Err(format!("unrecognized snr source {other:?}")),
        }
    }
}

impl SnrSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SnrSource::Manifest => "manifest",
            SnrSource::Wada => "wada",
            SnrSource::ManifestThenWada => "manifest-then-wada",
        }
    }
}

fn audio_clip(record: &UtteranceRecord) -> Result<AudioClip> {
    let path = record.audio_path.as_ref().ok_or_else(|| {
        AuditError::input(format!("record {:?} has no audio_path", record.sample_id))
    })?;
    read_wav_mono(path)
}

/// Build the standardized feature table for a corpus.
///
/// Durations come from the manifest or, failing that, from the audio length;
/// SNR per `snr_source`. Missing ages are imputed with the observed mean and
/// flagged; continuous columns are z-scored with pooled-corpus population
/// moments.
pub fn build_features(
    records: &[UtteranceRecord],
    snr_source: SnrSource,
    bins: &AgeBinMap,
    table: &WadaTable,
) -> Result<(Vec<FeatureVector>, StandardizationStats)> {
    if records.is_empty() {
        return Err(AuditError::input("no records to build features from"));
    }

    // Durations, with audio fallback.
    let mut log_durations = Vec::with_capacity(records.len());
    let mut missing_duration = Vec::new();
    for record in records {
        let duration = match record.duration_s {
            Some(d) => Some(d),
            None => match audio_clip(record) {
                Ok(clip) if clip.duration_s() > 0.0 => Some(clip.duration_s()),
                _ => None,
            },
        };
        match duration {
            Some(d) => log_durations.push(d.ln()),
            None => {
                missing_duration.push(record.sample_id.clone());
                log_durations.push(f64::NAN);
            }
        }
    }
    if !missing_duration.is_empty() {
        return Err(AuditError::input(format!(
            "no usable duration for {} record(s): {}",
            missing_duration.len(),
            missing_duration.join(", ")
        )));
    }

    // SNR per source.
    let mut snrs = Vec::with_capacity(records.len());
    let mut missing_snr = Vec::new();
    for record in records {
        let estimate = || -> Result<f64> {
            let clip = audio_clip(record)?;
            wada_snr(&clip.samples, clip.sample_rate, table)
        };
        let snr = match snr_source {
            SnrSource::Manifest => record.snr_db,
            SnrSource::Wada => match estimate() {
                Ok(v) => Some(v),
                Err(AuditError::UndefinedSnr(_)) | Err(AuditError::Input(_)) => None,
                Err(e) => return Err(e),
            },
            SnrSource::ManifestThenWada => match record.snr_db {
                Some(v) => Some(v),
                None => match estimate() {
                    Ok(v) => Some(v),
                    Err(AuditError::UndefinedSnr(_)) | Err(AuditError::Input(_)) => None,
                    Err(e) => return Err(e),
                },
            },
        };
        match snr {
            Some(v) => snrs.push(v),
            None => {
                missing_snr.push(record.sample_id.clone());
                snrs.push(f64::NAN);
            }
        }
    }
    if !missing_snr.is_empty() {
        return Err(AuditError::input(format!(
            "no usable SNR (source: {}) for {} record(s): {}",
            snr_source.as_str(),
            missing_snr.len(),
            missing_snr.join(", ")
        )));
    }

    // Ages: parse, mean-impute, flag.
    let parsed_ages: Vec<Option<f64>> =
        records.iter().map(|r| parse_age(r.age_raw.as_deref(), bins)).collect();
    let observed: Vec<f64> = parsed_ages.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(AuditError::numerical(
            "no record carries a usable age; the age column would be constant after imputation",
        ));
    }
    let age_mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ages: Vec<f64> = parsed_ages.iter().map(|a| a.unwrap_or(age_mean)).collect();

    let snr_stats = ColumnStats::from_column("x_snr", &snrs)?;
    let len_stats = ColumnStats::from_column("x_len", &log_durations)?;
    let age_stats = ColumnStats::from_column("x_age", &ages)?;

    let mut features = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        features.push(FeatureVector {
            sample_id: record.sample_id.clone(),
            speaker_id: record.speaker_id.clone(),
            dataset_id: record.dataset_id.clone(),
            snr_db: snrs[i],
            log_duration: log_durations[i],
            age_years: ages[i],
            x_snr: snr_stats.apply(snrs[i]),
            x_len: len_stats.apply(log_durations[i]),
            x_age: age_stats.apply(ages[i]),
            x_miss: if parsed_ages[i].is_none() { 1.0 } else { 0.0 },
            sex: record.sex,
            l1: record.l1,
            typicality: record.typicality,
        });
    }

    let stats = StandardizationStats {
        columns: BTreeMap::from([
            ("x_snr".to_string(), snr_stats),
            ("x_len".to_string(), len_stats),
            ("x_age".to_string(), age_stats),
        ]),
        age_imputation_mean: age_mean,
    };
    Ok((features, stats))
}

const FEATURE_COLUMNS: [&str; 13] = [
    "sample_id",
    "speaker_id",
    "dataset_id",
    "snr_db",
    "log_duration",
    "age_years",
    "x_snr",
    "x_len",
    "x_age",
    "x_miss",
    "sex",
    "l1",
    "typicality",
];

/// Write the feature table as CSV (shortest exact float round-trip).
pub fn write_features_csv(features: &[FeatureVector], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(FEATURE_COLUMNS)
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for f in features {
        writer
            .write_record([
                f.sample_id.as_str(),
                f.speaker_id.as_str(),
                f.dataset_id.as_str(),
                &f.snr_db.to_string(),
                &f.log_duration.to_string(),
                &f.age_years.to_string(),
                &f.x_snr.to_string(),
                &f.x_len.to_string(),
                &f.x_age.to_string(),
                &f.x_miss.to_string(),
                f.sex.as_str(),
                f.l1.as_str(),
                f.typicality.as_str(),
            ])
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

/// Read a feature table back; the header must match the schema exactly.
pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| AuditError::parse(path, 1, e.to_string()))?
        .clone();
    for expected in FEATURE_COLUMNS {
        if !headers.iter().any(|h| h == expected) {
            return Err(AuditError::schema(path, format!("missing column {expected:?}")));
        }
    }
    let idx: Vec<usize> = FEATURE_COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).unwrap())
        .collect();

    let mut features = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AuditError::parse(path, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| {
                AuditError::parse(path, line, format!("non-numeric {}", FEATURE_COLUMNS[i]))
            })
        };
        features.push(FeatureVector {
            sample_id: field(0).to_owned(),
            speaker_id: field(1).to_owned(),
            dataset_id: field(2).to_owned(),
            snr_db: number(3)?,
            log_duration: number(4)?,
            age_years: number(5)?,
            x_snr: number(6)?,
            x_len: number(7)?,
            x_age: number(8)?,
            x_miss: number(9)?,
            sex: Sex::from_str(field(10)).map_err(|e| AuditError::parse(path, line, e))?,
            l1: L1::from_str(field(11)).map_err(|e| AuditError::parse(path, line, e))?,
            typicality: Typicality::from_str(field(12))
                .map_err(|e| AuditError::parse(path, line, e))?,
        });
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn record(id: &str, duration: f64, snr: Option<f64>, age: Option<&str>) -> UtteranceRecord {
        UtteranceRecord {
            sample_id: id.into(),
            speaker_id: format!("s_{id}"),
            dataset_id: "d1".into(),
            reference: "a".into(),
            hypotheses: Map::from([("m1".to_string(), "a".to_string())]),
            duration_s: Some(duration),
            audio_path: None,
            age_raw: age.map(str::to_owned),
            sex: Sex::Unknown,
            l1: L1::Unknown,
            typicality: Typicality::Unknown,
            snr_db: snr,
        }
    }

    #[test]
    fn two_point_log_duration_z_scores() {
        let records = vec![
            record("u1", 1f64.exp(), Some(10.0), Some("20")),
            record("u2", 3f64.exp(), Some(20.0), Some("40")),
        ];
        let (features, stats) =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap();
        assert!((features[0].x_len + 1.0).abs() < 1e-9);
        assert!((features[1].x_len - 1.0).abs() < 1e-9);
        let mean: f64 = features.iter().map(|f| f.x_len).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12);
        assert!((stats.column("x_len").unwrap().mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn age_imputation_and_missing_flag() {
        let records = vec![
            record("u1", 1.0, Some(1.0), Some("20")),
            record("u2", 2.0, Some(2.0), None),
            record("u3", 3.0, Some(3.0), Some("40")),
        ];
        let (features, stats) =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap();
        assert_eq!(stats.age_imputation_mean, 30.0);
        assert_eq!(features[1].age_years, 30.0);
        let flags: Vec<f64> = features.iter().map(|f| f.x_miss).collect();
        assert_eq!(flags, vec![0.0, 1.0, 0.0]);
        // Imputed rows sit exactly at the column mean, so z = 0.
        assert!(features[1].x_age.abs() < 1e-12);
    }

    #[test]
    fn missing_snr_lists_records() {
        let records = vec![
            record("u1", 1.0, Some(1.0), Some("20")),
            record("u2", 2.0, None, Some("25")),
            record("u3", 3.0, None, Some("30")),
        ];
        let err =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("u2") && msg.contains("u3"), "{msg}");
    }

    #[test]
    fn constant_column_is_an_error() {
        let records = vec![
            record("u1", 2.0, Some(5.0), Some("20")),
            record("u2", 2.0, Some(5.0), Some("20")),
        ];
        let err =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap_err();
        assert!(matches!(err, AuditError::Numerical(_)), "{err}");
    }

    #[test]
    fn standardization_is_idempotent_bitwise() {
        let records = vec![
            record("u1", 1.5, Some(3.0), Some("20")),
            record("u2", 2.5, Some(9.0), Some("50")),
            record("u3", 4.0, Some(27.0), Some("35")),
        ];
        let (features, stats) =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap();
        let snr = stats.column("x_snr").unwrap();
        for f in &features {
            assert_eq!(f.x_snr.to_bits(), snr.apply(f.snr_db).to_bits());
        }
    }

    #[test]
    fn features_csv_round_trip() {
        let records = vec![
            record("u1", 1.5, Some(3.0), Some("20")),
            record("u2", 2.5, Some(9.0), None),
            record("u3", 4.5, Some(12.0), Some("60")),
        ];
        let (features, _) =
            build_features(&records, SnrSource::Manifest, &AgeBinMap::default(), WadaTable::bundled())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&features, &path).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back.len(), features.len());
        for (a, b) in features.iter().zip(&back) {
            assert_eq!(a.sample_id, b.sample_id);
            assert_eq!(a.x_snr.to_bits(), b.x_snr.to_bits(), "exact float round-trip");
            assert_eq!(a.x_miss, b.x_miss);
            assert_eq!(a.sex, b.sex);
        }
    }
}
