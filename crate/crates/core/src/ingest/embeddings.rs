//! Word-vector table loading.
//!
//! Accepts the common whitespace-separated text layout: one token per line
//! followed by its vector components, with an optional `count dim` header
//! line (exactly two integer fields) that is auto-detected and consumed.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{AuditError, Result};

/// How tokens are folded before storage and lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseMode {
    AsIs,
    /// Fold to lowercase, matching the transcript normalization.
    Lowercase,
}

/// An immutable token -> vector table with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub case_mode: CaseMode,
    /// Number of duplicate tokens ignored while loading (first wins).
    pub duplicates_ignored: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, case_mode: CaseMode) -> Self {
        EmbeddingTable { dim, case_mode, duplicates_ignored: 0, vectors: HashMap::new() }
    }

    fn fold(&self, token: &str) -> String {
        match self.case_mode {
            CaseMode::AsIs => token.to_owned(),
            CaseMode::Lowercase => token.to_lowercase(),
        }
    }

    /// Insert a vector; returns false (and keeps the first) on duplicates.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(AuditError::input(format!(
                "vector for {token:?} has {} components, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        let key = self.fold(token);
        if self.vectors.contains_key(&key) {
            self.duplicates_ignored += 1;
            return Ok(false);
        }
        self.vectors.insert(key, vector);
        Ok(true)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        match self.case_mode {
            CaseMode::AsIs => self.vectors.get(token).map(Vec::as_slice),
            CaseMode::Lowercase => {
                if token.chars().any(char::is_uppercase) {
                    self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
                } else {
                    self.vectors.get(token).map(Vec::as_slice)
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Load a text-format word-vector file.
///
/// The dimension is inferred from the first data line; every later line is
/// validated against it. Duplicate tokens keep the first occurrence and are
/// counted in `duplicates_ignored`.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    load_embeddings_str(path, &text)
}

pub(crate) fn load_embeddings_str(path: &Path, text: &str) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    let mut seen_first = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !seen_first {
            seen_first = true;
            // Header detection: a first line with exactly two integer fields.
            if fields.len() == 2
                && fields[0].parse::<u64>().is_ok()
                && fields[1].parse::<u64>().is_ok()
            {
                continue;
            }
        }
        if fields.len() < 2 {
            return Err(AuditError::parse(
                path,
                line_no,
                format!("expected `token v1 ... vd`, got {} field(s)", fields.len()),
            ));
        }
        let token = fields[0];
        let components = &fields[1..];
        let table = match table.as_mut() {
            Some(t) => {
                if components.len() != t.dim {
                    return Err(AuditError::parse(
                        path,
                        line_no,
                        format!(
                            "dimension mismatch: expected {} components, got {}",
                            t.dim,
                            components.len()
                        ),
                    ));
                }
                t
            }
            None => {
                table = Some(EmbeddingTable::new(components.len(), CaseMode::Lowercase));
                table.as_mut().unwrap()
            }
        };
        let mut vector = Vec::with_capacity(components.len());
        for c in components {
            let v: f64 = c.parse().map_err(|_| {
                AuditError::parse(path, line_no, format!("non-numeric component {c:?}"))
            })?;
            vector.push(v);
        }
        table.insert(token, vector)?;
    }
    table.ok_or_else(|| AuditError::input(format!("empty embedding file {}", path.display())))
}
