//! Precomputed sentence-vector sidecar files.
//!
//! JSONL, one vector per line: `{"key":"<sample_id>|ref","vec":[...]}` or
//! `{"key":"<sample_id>|<model_id>","vec":[...]}`. Lets an external sentence
//! encoder feed the semantic-distance metric without binding an ML runtime.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{AuditError, Result};

#[derive(Deserialize)]
struct SidecarLine {
    key: String,
    vec: Vec<f64>,
}

/// Keyed sentence vectors for the precomputed semantic-distance provider.
#[derive(Debug, Clone, Default)]
pub struct SentenceVectors {
    map: BTreeMap<String, Vec<f64>>,
}

impl SentenceVectors {
    pub fn reference_key(sample_id: &str) -> String {
        format!("{sample_id}|ref")
    }

    pub fn hypothesis_key(sample_id: &str, model_id: &str) -> String {
        format!("{sample_id}|{model_id}")
    }

    pub fn insert(&mut self, key: String, vector: Vec<f64>) {
        self.map.insert(key, vector);
    }

    /// Look a key up; missing keys are an input error naming the key.
    pub fn get(&self, key: &str) -> Result<&[f64]> {
        self.map
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| AuditError::input(format!("sentence-vector sidecar is missing key {key:?}")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Load a sidecar file; duplicate keys keep the last occurrence.
pub fn load_sentence_vectors(path: &Path) -> Result<SentenceVectors> {
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let mut vectors = SentenceVectors::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SidecarLine = serde_json::from_str(line)
            .map_err(|e| AuditError::parse(path, idx + 1, e.to_string()))?;
        vectors.insert(parsed.key, parsed.vec);
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_looks_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        fs::write(&path, "{\"key\":\"u1|ref\",\"vec\":[1.0,0.0]}\n{\"key\":\"u1|m1\",\"vec\":[0.0,1.0]}\n")
            .unwrap();
        let v = load_sentence_vectors(&path).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.get("u1|ref").unwrap(), &[1.0, 0.0]);
        let err = v.get("u2|ref").unwrap_err();
        assert!(err.to_string().contains("u2|ref"), "{err}");
    }
}
