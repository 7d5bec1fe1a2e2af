//! Planted-coefficient synthetic corpus generator.
//!
//! Produces a manifest with transcripts and metadata, a toy word-vector
//! table covering the vocabulary, and a planted score table in which every
//! metric column follows the elasticity model exactly: known slopes and
//! intercept shifts applied to the (realized-moment) standardized features,
//! plus speaker-level and idiosyncratic Gaussian noise. The accompanying
//! truth record carries the effective (response-standardized) coefficients
//! and the analytic R-squared, which downstream fits must recover.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{ScoreRow, ScoreTable, Sex, Typicality, UtteranceRecord, L1};
use crate::metrics::{MetricFlags, MetricVector, METRIC_NAMES};

/// Corpus shape and seed.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub utterances: usize,
    pub models: usize,
    pub speakers: usize,
    pub datasets: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { utterances: 5000, models: 4, speakers: 1250, datasets: 2, seed: 42 }
    }
}

/// What the generator planted, in raw and response-standardized units.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    /// Design-column name -> raw planted coefficient (slopes, intercept
    /// shifts, dataset and model offsets).
    pub planted: BTreeMap<String, f64>,
    pub intercept: f64,
    pub sigma_cluster: f64,
    pub sigma_eps: f64,
    /// Realized population moments of each metric's response column.
    pub response_mean: BTreeMap<String, f64>,
    pub response_sd: BTreeMap<String, f64>,
    /// metric -> column -> planted coefficient divided by the response sd;
    /// what a fit on the standardized response should estimate.
    pub effective: BTreeMap<String, BTreeMap<String, f64>>,
    /// metric -> 1 - var(noise)/var(response), both realized.
    pub r2_analytic: BTreeMap<String, f64>,
    /// Planted per-utterance difficulty (continuous slopes + demographic
    /// shifts; no intercept, dataset or model terms), raw response units.
    pub true_sdi: Vec<f64>,
    pub n_rows: usize,
}

/// Generated corpus: records, planted scores, embeddings, truth.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<UtteranceRecord>,
    pub scores: ScoreTable,
    pub embeddings_text: String,
    pub truth: SynthTruth,
}

const VOCAB: [&str; 40] = [
    "river", "stream", "house", "home", "quick", "fast", "small", "little", "begin", "start",
    "road", "path", "bright", "shiny", "sound", "noise", "window", "garden", "market", "bottle",
    "yellow", "mountain", "pencil", "dinner", "morning", "village", "answer", "number", "weather",
    "station", "picture", "teacher", "basket", "corner", "summer", "winter", "letter", "doctor",
    "kitchen", "animal",
];

/// The first 16 vocabulary words form 8 near-synonym pairs (2k, 2k+1).
const SYNONYM_PAIRS: usize = 8;

fn synonym_partner(index: usize) -> Option<usize> {
    if index < SYNONYM_PAIRS * 2 {
        Some(index ^ 1)
    } else {
        None
    }
}

const AGE_BINS: [(&str, f64); 7] = [
    ("teens", 15.0),
    ("twenties", 25.0),
    ("thirties", 35.0),
    ("fourties", 45.0),
    ("fifties", 55.0),
    ("sixties", 65.0),
    ("seventies", 75.0),
];

struct Speaker {
    id: String,
    dataset: String,
    sex: Sex,
    l1: L1,
    typicality: Typicality,
    /// (raw string for the manifest, numeric years) or None when missing.
    age: Option<(String, f64)>,
}

fn planted_coefficients(models: &[String], datasets: &[String]) -> BTreeMap<String, f64> {
    let mut planted = BTreeMap::new();
    planted.insert("x_snr".to_string(), -0.3);
    planted.insert("x_len".to_string(), 0.2);
    planted.insert("x_age".to_string(), 0.1);
    planted.insert("x_miss".to_string(), 0.05);
    planted.insert("sex:male".to_string(), -0.10);
    planted.insert("sex:unknown".to_string(), 0.05);
    planted.insert("l1:nonnative".to_string(), 0.30);
    planted.insert("l1:unknown".to_string(), 0.10);
    planted.insert("typicality:atypical".to_string(), 0.80);
    planted.insert("typicality:unknown".to_string(), 0.20);
    let dataset_offsets = [0.0, 0.2, -0.15, 0.1];
    for (i, d) in datasets.iter().enumerate() {
        if i > 0 {
            planted.insert(format!("dataset:{d}"), dataset_offsets[i % 4]);
        }
    }
    for (i, m) in models.iter().enumerate() {
        if i > 0 {
            planted.insert(format!("model:{m}"), 0.1 * i as f64);
        }
    }
    planted
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generate a full synthetic corpus (deterministic given the config).
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    assert!(cfg.utterances > 0 && cfg.models >= 2 && cfg.speakers > 0 && cfg.datasets >= 1);
    assert!(cfg.models <= 9 && cfg.datasets <= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let model_ids: Vec<String> = (1..=cfg.models).map(|i| format!("sys{i}")).collect();
    let dataset_ids: Vec<String> = (1..=cfg.datasets).map(|i| format!("d{i:02}")).collect();

    // Word vectors: unit-scale Gaussian components; synonym partners are
    // small perturbations of each other so their cosine clears the default
    // similarity threshold.
    let dim = 8;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(VOCAB.len());
    for index in 0..VOCAB.len() {
        match synonym_partner(index).filter(|p| *p < index) {
            Some(partner) => {
                let base = vectors[partner].clone();
                let v: Vec<f64> =
                    base.iter().map(|b| b + 0.15 * normal.sample(&mut rng)).collect();
                vectors.push(v);
            }
            None => {
                vectors.push((0..dim).map(|_| normal.sample(&mut rng)).collect());
            }
        }
    }
    let mut embeddings_text = String::new();
    for (word, vec) in VOCAB.iter().zip(&vectors) {
        let _ = write!(embeddings_text, "{word}");
        for v in vec {
            let _ = write!(embeddings_text, " {v:.6}");
        }
        embeddings_text.push('\n');
    }

    // Speakers.
    let mut speakers = Vec::with_capacity(cfg.speakers);
    for s in 0..cfg.speakers {
        let sex = match rng.gen_range(0..100) {
            0..=49 => Sex::Female,
            50..=94 => Sex::Male,
            _ => Sex::Unknown,
        };
        let l1 = match rng.gen_range(0..100) {
            0..=54 => L1::Native,
            55..=94 => L1::Nonnative,
            _ => L1::Unknown,
        };
        let typicality = match rng.gen_range(0..100) {
            0..=64 => Typicality::Typical,
            65..=94 => Typicality::Atypical,
            _ => Typicality::Unknown,
        };
        let age = if rng.gen_range(0..100) < 85 {
            if rng.gen_range(0..100) < 20 {
                let (label, years) = AGE_BINS[rng.gen_range(0..AGE_BINS.len())];
                Some((label.to_string(), years))
            } else {
                let years = rng.gen_range(18..=80);
                Some((years.to_string(), years as f64))
            }
        } else {
            None
        };
        speakers.push(Speaker {
            id: format!("spk{s:05}"),
            dataset: dataset_ids[s % cfg.datasets].clone(),
            sex,
            l1,
            typicality,
            age,
        });
    }

    // Utterances: metadata, reference and per-model hypotheses.
    let mut records = Vec::with_capacity(cfg.utterances);
    let mut durations = Vec::with_capacity(cfg.utterances);
    let mut snrs = Vec::with_capacity(cfg.utterances);
    let mut ages: Vec<Option<f64>> = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let speaker = &speakers[i % cfg.speakers];
        let duration = (1.2 + 0.6 * normal.sample(&mut rng)).exp().clamp(0.3, 30.0);
        let snr_db: f64 = (15.0 + 8.0 * normal.sample(&mut rng)).clamp(-5.0, 40.0);

        let len = rng.gen_range(5..=14);
        let ref_indices: Vec<usize> = (0..len).map(|_| rng.gen_range(0..VOCAB.len())).collect();
        let reference: Vec<&str> = ref_indices.iter().map(|&w| VOCAB[w]).collect();

        let mut hypotheses = BTreeMap::new();
        for (m_idx, model) in model_ids.iter().enumerate() {
            let p_err = 0.04 + 0.05 * m_idx as f64 + rng.gen_range(0.0..0.05);
            let mut tokens: Vec<&str> = Vec::with_capacity(len + 2);
            for &w in &ref_indices {
                let r: f64 = rng.gen_range(0.0..1.0);
                if r < p_err * 0.6 {
                    // Substitution: half the time the synonym partner.
                    let replacement = match synonym_partner(w) {
                        Some(p) if rng.gen_bool(0.5) => p,
                        _ => rng.gen_range(0..VOCAB.len()),
                    };
                    tokens.push(VOCAB[replacement]);
                } else if r < p_err * 0.85 {
                    // Deletion.
                } else {
                    tokens.push(VOCAB[w]);
                }
                if rng.gen_range(0.0..1.0) < p_err * 0.15 {
                    tokens.push(VOCAB[rng.gen_range(0..VOCAB.len())]);
                }
            }
            hypotheses.insert(model.clone(), tokens.join(" "));
        }

        durations.push(duration);
        snrs.push(snr_db);
        ages.push(speaker.age.as_ref().map(|(_, years)| *years));
        records.push(UtteranceRecord {
            sample_id: format!("utt{i:05}"),
            speaker_id: speaker.id.clone(),
            dataset_id: speaker.dataset.clone(),
            reference: reference.join(" "),
            hypotheses,
            duration_s: Some(duration),
            audio_path: None,
            age_raw: speaker.age.as_ref().map(|(raw, _)| raw.clone()),
            sex: speaker.sex,
            l1: speaker.l1,
            typicality: speaker.typicality,
            snr_db: Some(snr_db),
        });
    }

    // Standardize features exactly the way the feature builder does:
    // pooled population moments, mean imputation for ages.
    let log_durations: Vec<f64> = durations.iter().map(|d| d.ln()).collect();
    let observed: Vec<f64> = ages.iter().flatten().copied().collect();
    let age_mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let imputed: Vec<f64> = ages.iter().map(|a| a.unwrap_or(age_mean)).collect();
    let (snr_m, snr_s) = population_stats(&snrs);
    let (len_m, len_s) = population_stats(&log_durations);
    let (age_m, age_s) = population_stats(&imputed);

    let planted = planted_coefficients(&model_ids, &dataset_ids);
    let sigma_cluster = 0.35;
    let sigma_eps = 0.5;
    let intercept = 1.0;

    // Per-utterance planted difficulty (continuous + demographic terms).
    let mut true_sdi = Vec::with_capacity(cfg.utterances);
    let mut systemic = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let speaker = &speakers[i % cfg.speakers];
        let x_snr = (snrs[i] - snr_m) / snr_s;
        let x_len = (log_durations[i] - len_m) / len_s;
        let x_age = (imputed[i] - age_m) / age_s;
        let x_miss = if ages[i].is_none() { 1.0 } else { 0.0 };
        let mut difficulty = planted["x_snr"] * x_snr
            + planted["x_len"] * x_len
            + planted["x_age"] * x_age
            + planted["x_miss"] * x_miss;
        for (factor, level) in [
            ("sex", speaker.sex.as_str()),
            ("l1", speaker.l1.as_str()),
            ("typicality", speaker.typicality.as_str()),
        ] {
            if let Some(alpha) = planted.get(&format!("{factor}:{level}")) {
                difficulty += alpha;
            }
        }
        true_sdi.push(difficulty);
        let gamma = planted
            .get(&format!("dataset:{}", speaker.dataset))
            .copied()
            .unwrap_or(0.0);
        systemic.push(gamma);
    }

    // Responses: one column per metric with independent noise draws.
    let n_rows = cfg.utterances * cfg.models;
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut noise_columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for metric in METRIC_NAMES {
        // Speaker-level noise shared by all of the speaker's rows.
        let cluster_noise: Vec<f64> = (0..cfg.speakers)
            .map(|_| sigma_cluster * normal.sample(&mut rng))
            .collect();
        let mut column = Vec::with_capacity(n_rows);
        let mut noise_column = Vec::with_capacity(n_rows);
        for i in 0..cfg.utterances {
            let speaker_idx = i % cfg.speakers;
            for (m_idx, model) in model_ids.iter().enumerate() {
                let delta = if m_idx > 0 { planted[&format!("model:{model}")] } else { 0.0 };
                let noise = cluster_noise[speaker_idx] + sigma_eps * normal.sample(&mut rng);
                column.push(intercept + true_sdi[i] + systemic[i] + delta + noise);
                noise_column.push(noise);
            }
        }
        columns.insert(metric, column);
        noise_columns.insert(metric, noise_column);
    }

    let mut rows = Vec::with_capacity(n_rows);
    for (i, record) in records.iter().enumerate() {
        for (m_idx, model) in model_ids.iter().enumerate() {
            let at = i * cfg.models + m_idx;
            let value = |metric: &str| columns[metric][at];
            rows.push(ScoreRow {
                sample_id: record.sample_id.clone(),
                model_id: model.clone(),
                metrics: MetricVector {
                    wer: value("wer"),
                    cer: value("cer"),
                    mer: value("mer"),
                    wil: value("wil"),
                    ember: value("ember"),
                    semdist: value("semdist"),
                    flags: MetricFlags::default(),
                },
            });
        }
    }

    let mut response_mean = BTreeMap::new();
    let mut response_sd = BTreeMap::new();
    let mut effective = BTreeMap::new();
    let mut r2_analytic = BTreeMap::new();
    for metric in METRIC_NAMES {
        let (mean, sd) = population_stats(&columns[metric]);
        let (_, noise_sd) = population_stats(&noise_columns[metric]);
        let mut eff: BTreeMap<String, f64> =
            planted.iter().map(|(k, v)| (k.clone(), v / sd)).collect();
        eff.insert("intercept".to_string(), (intercept - mean) / sd);
        effective.insert(metric.to_string(), eff);
        r2_analytic.insert(metric.to_string(), 1.0 - (noise_sd * noise_sd) / (sd * sd));
        response_mean.insert(metric.to_string(), mean);
        response_sd.insert(metric.to_string(), sd);
    }

    SynthCorpus {
        records,
        scores: ScoreTable { rows },
        embeddings_text,
        truth: SynthTruth {
            planted,
            intercept,
            sigma_cluster,
            sigma_eps,
            response_mean,
            response_sd,
            effective,
            r2_analytic,
            true_sdi,
            n_rows,
        },
    }
}
