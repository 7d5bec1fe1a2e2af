//! Corpus-scale ASR transcript auditing.
//!
//! Scores reference/hypothesis pairs with six complementary error metrics
//! (WER, CER, MER, WIL, EmbER, SemDist), quantifies each metric's
//! sensitivity to speaker demographics and acoustics with a
//! speaker-clustered fixed-effects regression, derives a per-utterance
//! sample difficulty index from the fitted elasticities, and validates it
//! against multi-model cartography maps. A principal-component view of the
//! metric correlation structure exposes redundancy between the metrics.
//!
//! The `asr-audit` binary in the companion CLI crate drives the full
//! pipeline; this crate holds all algorithms and artifact schemas.

pub mod align;
pub mod cartography;
pub mod error;
pub mod features;
pub mod ingest;
pub mod meaf;
pub mod metrics;
pub mod pca;
pub mod sdi;
pub mod svg;
pub mod synth;

pub use error::{AuditError, Result};
pub use ingest::{
    load_embeddings, load_manifest, load_sentence_vectors, read_scores, write_scores,
    EmbeddingTable, ManifestFormat, ScoreRow, ScoreTable, SentenceVectors, Sex, Typicality,
    UtteranceRecord, L1,
};
pub use metrics::{score_all, EmbErConfig, MetricVector, ScoreConfig, SentenceProvider, METRIC_NAMES};
