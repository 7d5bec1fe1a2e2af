//! Age parsing: numeric strings and categorical bins mapped to midpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{AuditError, Result};

/// Default label -> midpoint table; ships as an editable CSV so
/// corpus-specific spellings can be mapped without code changes.
const DEFAULT_BINS: &str = include_str!("../../data/age_bins.csv");

/// Categorical age label to numeric midpoint mapping.
#[derive(Debug, Clone)]
pub struct AgeBinMap {
    bins: BTreeMap<String, f64>,
}

impl Default for AgeBinMap {
    fn default() -> Self {
        AgeBinMap::from_csv_str(DEFAULT_BINS).expect("bundled age bin table is valid")
    }
}

impl AgeBinMap {
    /// Parse a `label,midpoint_years` CSV (header line required).
    pub fn from_csv_str(text: &str) -> Result<AgeBinMap> {
        let mut bins = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let label = parts
                .next()
                .map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| AuditError::input(format!("bad age bin line {}", idx + 1)))?;
            let midpoint: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| AuditError::input(format!("bad age bin line {}", idx + 1)))?;
            bins.insert(label, midpoint);
        }
        Ok(AgeBinMap { bins })
    }

    pub fn from_csv_path(path: &Path) -> Result<AgeBinMap> {
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        AgeBinMap::from_csv_str(&text)
    }

    pub fn lookup(&self, label: &str) -> Option<f64> {
        self.bins.get(&label.trim().to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Parse an age string to years.
///
/// Numeric strings parse directly; known categorical bins map to their
/// midpoints; anything else (including absence) yields `None`.
pub fn parse_age(age_raw: Option<&str>, bins: &AgeBinMap) -> Option<f64> {
    let raw = age_raw?.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    bins.lookup(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_age() {
        assert_eq!(parse_age(Some("34"), &AgeBinMap::default()), Some(34.0));
        assert_eq!(parse_age(Some("34.5"), &AgeBinMap::default()), Some(34.5));
    }

    #[test]
    fn bin_midpoints() {
        let bins = AgeBinMap::default();
        assert_eq!(parse_age(Some("twenties"), &bins), Some(25.0));
        assert_eq!(parse_age(Some("teens"), &bins), Some(15.0));
        assert_eq!(parse_age(Some("Fourties"), &bins), Some(45.0));
        assert_eq!(parse_age(Some("forties"), &bins), Some(45.0));
    }

    #[test]
    fn absent_or_unknown() {
        let bins = AgeBinMap::default();
        assert_eq!(parse_age(None, &bins), None);
        assert_eq!(parse_age(Some(""), &bins), None);
        assert_eq!(parse_age(Some("elderly-ish"), &bins), None);
    }

    #[test]
    fn custom_table() {
        let bins = AgeBinMap::from_csv_str("label,midpoint_years\nyouth,12\n").unwrap();
        assert_eq!(parse_age(Some("youth"), &bins), Some(12.0));
        assert_eq!(parse_age(Some("twenties"), &bins), None);
    }
}
