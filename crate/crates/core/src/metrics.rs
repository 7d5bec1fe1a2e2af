//! The six per-utterance transcript metrics.
//!
//! Word error rate, character error rate, match error rate, word information
//! lost, embedding error rate (substitutions between semantically similar
//! words are down-weighted) and semantic distance (cosine distance between
//! sentence embeddings). All values are stored as fractions; any x100
//! display scaling belongs to the report layer.

use serde::{Deserialize, Serialize};

use crate::align::{self, AlignmentResult, EditOp};
use crate::error::{AuditError, Result};
use crate::ingest::{EmbeddingTable, ScoreRow, ScoreTable, SentenceVectors, UtteranceRecord};

/// Metric names in canonical column order.
pub const METRIC_NAMES: [&str; 6] = ["wer", "cer", "mer", "wil", "ember", "semdist"];

/// Degenerate-input markers attached to a metric vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    /// Reference normalized to zero tokens while the hypothesis did not.
    pub empty_ref: bool,
    /// A sentence embedding degenerated to the zero vector (all tokens OOV).
    pub oov_sentence: bool,
}

impl MetricFlags {
    pub fn any(&self) -> bool {
        self.empty_ref || self.oov_sentence
    }
}

/// The six scores for one (utterance, model) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricVector {
    pub wer: f64,
    pub cer: f64,
    pub mer: f64,
    pub wil: f64,
    pub ember: f64,
    pub semdist: f64,
    pub flags: MetricFlags,
}

impl MetricVector {
    pub fn get(&self, name: &str) -> f64 {
        match name {
            "wer" => self.wer,
            "cer" => self.cer,
            "mer" => self.mer,
            "wil" => self.wil,
            "ember" => self.ember,
            "semdist" => self.semdist,
            other => panic!("unknown metric {other:?}"),
        }
    }

    pub fn values(&self) -> [f64; 6] {
        [self.wer, self.cer, self.mer, self.wil, self.ember, self.semdist]
    }
}

/// Embedding-error-rate parameters.
///
/// A substitution whose token embeddings have cosine similarity at or above
/// `similarity_threshold` costs `similar_sub_weight` instead of 1; any
/// substitution with an out-of-vocabulary side counts as dissimilar.
#[derive(Debug, Clone, Copy)]
pub struct EmbErConfig {
    pub similarity_threshold: f64,
    pub similar_sub_weight: f64,
}

impl Default for EmbErConfig {
    fn default() -> Self {
        EmbErConfig { similarity_threshold: 0.4, similar_sub_weight: 0.1 }
    }
}

impl EmbErConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(AuditError::input(format!(
                "similarity threshold {} outside [-1, 1]",
                self.similarity_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.similar_sub_weight) {
            return Err(AuditError::input(format!(
                "similar-substitution weight {} outside [0, 1]",
                self.similar_sub_weight
            )));
        }
        Ok(())
    }
}

/// Sentence-embedding source for the semantic-distance metric.
pub enum SentenceProvider<'a> {
    /// Mean-pooled word vectors from the shared embedding table.
    MeanPool,
    /// Vectors read from a sidecar file keyed by sample and model.
    Precomputed(&'a SentenceVectors),
}

/// Word error rate: (S + D + I) / N_ref.
///
/// An empty reference yields 0 when the hypothesis is empty too, otherwise
/// the fallback (S + D + I) / 1; the caller flags `empty_ref`.
pub fn wer(a: &AlignmentResult) -> f64 {
    error_rate(a.edits() as f64, a)
}

/// Character error rate: word error rate over the character alignment.
pub fn cer(a: &AlignmentResult) -> f64 {
    error_rate(a.edits() as f64, a)
}

/// Match error rate: (S + D + I) / (H + S + D + I); 0 when both sides empty.
pub fn mer(a: &AlignmentResult) -> f64 {
    let total = a.hits + a.edits();
    if total == 0 {
        0.0
    } else {
        a.edits() as f64 / total as f64
    }
}

/// Word information lost: 1 - H^2 / (N_ref * N_hyp); 0 when both sides are
/// empty, 1 when exactly one side is.
pub fn wil(a: &AlignmentResult) -> f64 {
    let (n_ref, n_hyp) = (a.n_ref(), a.n_hyp());
    if n_ref == 0 && n_hyp == 0 {
        return 0.0;
    }
    if n_ref == 0 || n_hyp == 0 {
        return 1.0;
    }
    1.0 - (a.hits * a.hits) as f64 / (n_ref * n_hyp) as f64
}

/// Embedding error rate over a word alignment.
///
/// Hits cost 0, deletions and insertions 1, substitutions 1 or the similar
/// weight depending on word-vector cosine; total cost is normalized by the
/// reference length like the word error rate.
pub fn ember(a: &AlignmentResult, table: &EmbeddingTable, cfg: &EmbErConfig) -> f64 {
    let mut cost = 0.0;
    for pair in &a.ops {
        cost += match pair.op {
            EditOp::Hit => 0.0,
            EditOp::Del | EditOp::Ins => 1.0,
            EditOp::Sub => {
                let similar = match (
                    pair.ref_token.as_deref().and_then(|t| table.get(t)),
                    pair.hyp_token.as_deref().and_then(|t| table.get(t)),
                ) {
                    (Some(r), Some(h)) => {
                        cosine(r, h).is_some_and(|c| c >= cfg.similarity_threshold)
                    }
                    _ => false,
                };
                if similar {
                    cfg.similar_sub_weight
                } else {
                    1.0
                }
            }
        };
    }
    error_rate(cost, a)
}

fn error_rate(cost: f64, a: &AlignmentResult) -> f64 {
    let n_ref = a.n_ref();
    if n_ref == 0 {
        if a.n_hyp() == 0 {
            0.0
        } else {
            cost
        }
    } else {
        cost / n_ref as f64
    }
}

/// Cosine similarity clamped to [-1, 1]; `None` if either norm is zero.
/// Bitwise-identical inputs short-circuit to exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    if a == b {
        return if is_zero(a) { None } else { Some(1.0) };
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
    }
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// Mean of in-vocabulary token vectors; the zero vector when no token is
/// in vocabulary (flagged as an OOV sentence downstream).
pub fn sentence_embedding(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim];
    let mut count = 0usize;
    for token in tokens {
        if let Some(v) = table.get(token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            count += 1;
        }
    }
    if count > 0 {
        for s in &mut sum {
            *s /= count as f64;
        }
    }
    sum
}

/// Semantic distance between two sentence embeddings: 1 - cosine.
///
/// Returns (distance, oov): if either embedding is the zero vector the
/// distance is 1.0 and the OOV flag is set.
pub fn semdist_from_vectors(e_ref: &[f64], e_hyp: &[f64]) -> (f64, bool) {
    if is_zero(e_ref) || is_zero(e_hyp) {
        return (1.0, true);
    }
    match cosine(e_ref, e_hyp) {
        Some(c) => (1.0 - c, false),
        None => (1.0, true),
    }
}

/// Semantic distance with the mean-pool provider.
pub fn semdist(ref_tokens: &[String], hyp_tokens: &[String], table: &EmbeddingTable) -> (f64, bool) {
    let e_ref = sentence_embedding(ref_tokens, table);
    let e_hyp = sentence_embedding(hyp_tokens, table);
    semdist_from_vectors(&e_ref, &e_hyp)
}

/// Scoring parameters for a full corpus pass.
pub struct ScoreConfig<'a> {
    pub ember: EmbErConfig,
    pub provider: SentenceProvider<'a>,
}

impl Default for ScoreConfig<'_> {
    fn default() -> Self {
        ScoreConfig { ember: EmbErConfig::default(), provider: SentenceProvider::MeanPool }
    }
}

/// Score one (reference, hypothesis) pair with the mean-pool provider.
pub fn score_pair(reference: &str, hypothesis: &str, table: &EmbeddingTable, cfg: &EmbErConfig) -> MetricVector {
    let ref_tokens = align::normalize(reference);
    let hyp_tokens = align::normalize(hypothesis);
    let (sd, oov) = semdist(&ref_tokens, &hyp_tokens, table);
    score_tokens(&ref_tokens, &hyp_tokens, table, cfg, sd, oov)
}

fn score_tokens(
    ref_tokens: &[String],
    hyp_tokens: &[String],
    table: &EmbeddingTable,
    cfg: &EmbErConfig,
    semdist_value: f64,
    oov_sentence: bool,
) -> MetricVector {
    let word = align::align(ref_tokens, hyp_tokens);
    let chars = align::align_chars(&align::join_tokens(ref_tokens), &align::join_tokens(hyp_tokens));
    let empty_ref = ref_tokens.is_empty() && !hyp_tokens.is_empty();
    MetricVector {
        wer: wer(&word),
        cer: cer(&chars),
        mer: mer(&word),
        wil: wil(&word),
        ember: ember(&word, table, cfg),
        semdist: semdist_value,
        flags: MetricFlags { empty_ref, oov_sentence },
    }
}

/// Score every (utterance, model) pair of a corpus.
///
/// Output order is (manifest order, sorted model id), independent of any
/// execution strategy.
pub fn score_all(
    records: &[UtteranceRecord],
    table: &EmbeddingTable,
    cfg: &ScoreConfig,
) -> Result<ScoreTable> {
    cfg.ember.validate()?;
    let mut rows = Vec::new();
    for record in records {
        let ref_tokens = align::normalize(&record.reference);
        for (model_id, hypothesis) in &record.hypotheses {
            let hyp_tokens = align::normalize(hypothesis);
            let (sd, oov) = match &cfg.provider {
                SentenceProvider::MeanPool => semdist(&ref_tokens, &hyp_tokens, table),
                SentenceProvider::Precomputed(vectors) => {
                    let e_ref = vectors.get(&SentenceVectors::reference_key(&record.sample_id))?;
                    let e_hyp = vectors
                        .get(&SentenceVectors::hypothesis_key(&record.sample_id, model_id))?;
                    semdist_from_vectors(e_ref, e_hyp)
                }
            };
            rows.push(ScoreRow {
                sample_id: record.sample_id.clone(),
                model_id: model_id.clone(),
                metrics: score_tokens(&ref_tokens, &hyp_tokens, table, &cfg.ember, sd, oov),
            });
        }
    }
    Ok(ScoreTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align, align_chars};
    use crate::ingest::CaseMode;
    use std::collections::BTreeMap;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn empty_table() -> EmbeddingTable {
        EmbeddingTable::new(2, CaseMode::Lowercase)
    }

    #[test]
    fn wer_basic() {
        let a = align(&toks("go meet"), &toks("go to meet"));
        assert_eq!(wer(&a), 0.5);
        let perfect = align(&toks("a b"), &toks("a b"));
        assert_eq!(wer(&perfect), 0.0);
    }

    #[test]
    fn wer_all_error_types() {
        // "a b c" -> "x c d": minimum edit distance 3 (brute-force checked
        // in the acceptance suite), so WER is exactly 1.0.
        let a = align(&toks("a b c"), &toks("x c d"));
        assert_eq!(a.edits(), 3);
        assert_eq!((a.n_ref(), a.n_hyp()), (3, 3));
        assert_eq!(wer(&a), 1.0);
    }

    #[test]
    fn wer_empty_reference_fallback() {
        let both_empty = align(&toks(""), &toks(""));
        assert_eq!(wer(&both_empty), 0.0);
        let a = align(&toks(""), &toks("a b"));
        assert_eq!(wer(&a), 2.0);
    }

    #[test]
    fn cer_basic() {
        assert_eq!(cer(&align_chars("ab", "ab")), 0.0);
        assert_eq!(cer(&align_chars("ab", "ac")), 0.5);
    }

    #[test]
    fn mer_basic() {
        let a = align(&toks("a b"), &toks("a b c d"));
        assert_eq!(mer(&a), 0.5);
        assert_eq!(mer(&align(&toks("a"), &toks("a"))), 0.0);
        // Empty hypothesis: all deletions.
        assert_eq!(mer(&align(&toks("a b c"), &toks(""))), 1.0);
        assert_eq!(mer(&align(&toks(""), &toks(""))), 0.0);
    }

    #[test]
    fn wil_basic() {
        assert_eq!(wil(&align(&toks("a b"), &toks("a b"))), 0.0);
        let a = align(&toks("a b"), &toks("a b c d"));
        assert_eq!(wil(&a), 0.5);
        // No shared words at all.
        let none = align(&toks("a b"), &toks("x y"));
        assert_eq!(wil(&none), 1.0);
        // One side empty.
        assert_eq!(wil(&align(&toks(""), &toks("a"))), 1.0);
        assert_eq!(wil(&align(&toks(""), &toks(""))), 0.0);
    }

    #[test]
    fn ember_similar_substitution_weighting() {
        let mut table = empty_table();
        table.insert("the", vec![1.0, 0.0]).unwrap();
        table.insert("this", vec![0.9, 0.436]).unwrap();
        table.insert("snake", vec![0.0, 1.0]).unwrap();
        table.insert("snack", vec![1.0, 0.0]).unwrap();
        let cfg = EmbErConfig::default();

        let similar = align(&toks("the store"), &toks("this store"));
        assert!((ember(&similar, &table, &cfg) - 0.1 / 2.0).abs() < 1e-12);

        let dissimilar = align(&toks("plastic snake"), &toks("plastic snack"));
        assert!((ember(&dissimilar, &table, &cfg) - 1.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn ember_equals_wer_with_empty_table() {
        let table = empty_table();
        let cfg = EmbErConfig::default();
        let a = align(&toks("a b c"), &toks("x c d"));
        assert_eq!(ember(&a, &table, &cfg), wer(&a));
    }

    #[test]
    fn ember_never_exceeds_wer() {
        let mut table = empty_table();
        table.insert("a", vec![1.0, 0.0]).unwrap();
        table.insert("b", vec![0.95, 0.3]).unwrap();
        let cfg = EmbErConfig::default();
        let a = align(&toks("a x"), &toks("b x"));
        assert!(ember(&a, &table, &cfg) <= wer(&a));
    }

    #[test]
    fn sentence_embedding_mean_and_oov() {
        let mut table = empty_table();
        table.insert("cat", vec![1.0, 0.0]).unwrap();
        table.insert("dog", vec![0.0, 1.0]).unwrap();
        assert_eq!(sentence_embedding(&toks("cat"), &table), vec![1.0, 0.0]);
        assert_eq!(sentence_embedding(&toks("cat dog"), &table), vec![0.5, 0.5]);
        assert_eq!(sentence_embedding(&toks("zebra"), &table), vec![0.0, 0.0]);
    }

    #[test]
    fn semdist_identity_and_bounds() {
        let mut table = empty_table();
        table.insert("cat", vec![1.0, 0.0]).unwrap();
        table.insert("dog", vec![0.0, 1.0]).unwrap();
        let (d, oov) = semdist(&toks("cat dog"), &toks("cat dog"), &table);
        assert_eq!(d, 0.0);
        assert!(!oov);
        // Orthogonal sentence embeddings.
        let (d, _) = semdist(&toks("cat"), &toks("dog"), &table);
        assert!((d - 1.0).abs() < 1e-12);
        // Antipodal bound.
        let (d, oov) = semdist_from_vectors(&[1.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(d, 2.0);
        assert!(!oov);
        // All tokens OOV.
        let (d, oov) = semdist(&toks("zebra"), &toks("cat"), &table);
        assert_eq!(d, 1.0);
        assert!(oov);
    }

    #[test]
    fn score_all_shapes_and_order() {
        let record = UtteranceRecord {
            sample_id: "u1".into(),
            speaker_id: "s1".into(),
            dataset_id: "d1".into(),
            reference: "hello world".into(),
            hypotheses: BTreeMap::from([
                ("m2".to_string(), "hello world".to_string()),
                ("m1".to_string(), "hello word".to_string()),
            ]),
            duration_s: Some(1.0),
            audio_path: None,
            age_raw: None,
            sex: Default::default(),
            l1: Default::default(),
            typicality: Default::default(),
            snr_db: None,
        };
        let mut table = empty_table();
        table.insert("hello", vec![1.0, 0.0]).unwrap();
        table.insert("world", vec![0.0, 1.0]).unwrap();
        let scores = score_all(&[record], &table, &ScoreConfig::default()).unwrap();
        assert_eq!(scores.rows.len(), 2);
        assert_eq!(scores.rows[0].model_id, "m1");
        assert_eq!(scores.rows[1].model_id, "m2");
        // Perfect hypothesis scores all zero.
        let perfect = &scores.rows[1].metrics;
        assert_eq!(perfect.wer, 0.0);
        assert_eq!(perfect.cer, 0.0);
        assert_eq!(perfect.mer, 0.0);
        assert_eq!(perfect.wil, 0.0);
        assert_eq!(perfect.ember, 0.0);
        assert_eq!(perfect.semdist, 0.0);
    }

    #[test]
    fn metrics_invariant_to_case_and_whitespace() {
        let table = empty_table();
        let cfg = EmbErConfig::default();
        let a = score_pair("The Cat sat", "the cat sat", &table, &cfg);
        let b = score_pair("  the cat sat  ", "THE CAT SAT", &table, &cfg);
        assert_eq!(a.values(), b.values());
    }
}
