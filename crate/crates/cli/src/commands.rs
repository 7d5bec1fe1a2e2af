//! Pipeline subcommand implementations.
//!
//! Each command stages plain CSV/JSON artifacts in the run directory and
//! appends a record (config hash, input hashes, toolkit version) to the run
//! manifest. Outputs are deterministic: rerunning with unchanged inputs
//! reproduces byte-identical files, timestamps in the run manifest aside.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use asr_audit_core::cartography::{self, CartographyPoint, ColorBy, SdiCorrelation};
use asr_audit_core::error::{AuditError, Result};
use asr_audit_core::features::{
    build_features, read_features_csv, write_features_csv, AgeBinMap, FeatureVector, WadaTable,
};
use asr_audit_core::ingest::{
    load_embeddings, load_manifest, load_sentence_vectors, read_scores, write_scores, ScoreTable,
};
use asr_audit_core::meaf::{self, FitReport};
use asr_audit_core::metrics::{
    score_all, EmbErConfig, ScoreConfig, SentenceProvider, METRIC_NAMES,
};
use asr_audit_core::pca;
use asr_audit_core::sdi::{self, FitView, SdiScore};
use asr_audit_core::synth::{self, SynthConfig};

use crate::config::{AuditConfig, DecileScope};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Artifact paths inside the run directory.
pub mod artifacts {
    use std::path::{Path, PathBuf};

    pub fn scores(out: &Path) -> PathBuf {
        out.join("scores.csv")
    }
    pub fn score_flags(out: &Path) -> PathBuf {
        out.join("score_flags.csv")
    }
    pub fn features(out: &Path) -> PathBuf {
        out.join("features.csv")
    }
    pub fn standardization(out: &Path) -> PathBuf {
        out.join("standardization.json")
    }
    pub fn fits_dir(out: &Path) -> PathBuf {
        out.join("fits")
    }
    pub fn fit_report(out: &Path, metric: &str) -> PathBuf {
        fits_dir(out).join(format!("fit_{metric}.json"))
    }
    pub fn fits_csv(out: &Path) -> PathBuf {
        out.join("fits.csv")
    }
    pub fn sdi(out: &Path) -> PathBuf {
        out.join("sdi.csv")
    }
    pub fn cartography(out: &Path) -> PathBuf {
        out.join("cartography.csv")
    }
    pub fn correlations(out: &Path) -> PathBuf {
        out.join("correlations.json")
    }
    pub fn figures_dir(out: &Path) -> PathBuf {
        out.join("figures")
    }
    pub fn cartography_svg(out: &Path, metric: &str) -> PathBuf {
        figures_dir(out).join(format!("cartography_{metric}.svg"))
    }
    pub fn cartography_stratum_svg(out: &Path, metric: &str, stratum: &str) -> PathBuf {
        figures_dir(out).join(format!("cartography_{metric}_{stratum}.svg"))
    }
    pub fn pca_loadings_csv(out: &Path) -> PathBuf {
        out.join("pca_loadings.csv")
    }
    pub fn pca_variance_csv(out: &Path) -> PathBuf {
        out.join("pca_variance.csv")
    }
    pub fn pca_svg(out: &Path) -> PathBuf {
        figures_dir(out).join("pca_loadings.svg")
    }
    pub fn report(out: &Path) -> PathBuf {
        out.join("report.html")
    }
    pub fn run_manifest(out: &Path) -> PathBuf {
        out.join("run_manifest.json")
    }
}

fn require_artifact(path: PathBuf, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(AuditError::MissingArtifact { path, producer: format!("asr-audit {producer}") })
    }
}

fn ensure_out(config: &AuditConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(|e| AuditError::io(&config.out, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AuditError::io(path, e))?;
    Ok(hex_digest(&bytes))
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct RunManifest {
    commands: BTreeMap<String, RunRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    toolkit_version: String,
    config_sha256: String,
    inputs_sha256: BTreeMap<String, String>,
    completed_unix: u64,
    seed: u64,
}

/// Record a completed command in the run manifest (merge on write).
fn record_run(config: &AuditConfig, command: &str, inputs: &[&Path]) -> Result<()> {
    let path = artifacts::run_manifest(&config.out);
    let mut manifest: RunManifest = if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| AuditError::io(&path, e))?;
        serde_json::from_str(&text).unwrap_or_default()
    } else {
        RunManifest::default()
    };
    let mut inputs_sha256 = BTreeMap::new();
    for input in inputs {
        inputs_sha256.insert(input.display().to_string(), sha256_file(input)?);
    }
    manifest.commands.insert(
        command.to_string(),
        RunRecord {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config_sha256: hex_digest(config.canonical_string().as_bytes()),
            inputs_sha256,
            completed_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seed: config.seed,
        },
    );
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AuditError::input(format!("cannot serialize run manifest: {e}")))?;
    fs::write(&path, json).map_err(|e| AuditError::io(&path, e))
}

fn load_wada_table(config: &AuditConfig) -> Result<WadaTable> {
    match &config.wada_table {
        Some(path) => WadaTable::from_csv_path(path),
        None => Ok(WadaTable::bundled().clone()),
    }
}

fn load_age_bins(config: &AuditConfig) -> Result<AgeBinMap> {
    match &config.age_bins {
        Some(path) => AgeBinMap::from_csv_path(path),
        None => Ok(AgeBinMap::default()),
    }
}

/// `score`: metric table + degenerate-input flags.
pub fn cmd_score(config: &AuditConfig) -> Result<()> {
    let manifest_path = config.require_manifest()?.clone();
    let embeddings_path = config.require_embeddings()?.clone();
    ensure_out(config)?;

    let records = load_manifest(&manifest_path, config.manifest_format())?;
    let table = load_embeddings(&embeddings_path)?;
    if table.duplicates_ignored > 0 {
        eprintln!(
            "warning: {} duplicate embedding token(s) ignored (first occurrence kept)",
            table.duplicates_ignored
        );
    }
    let sidecar = config
        .sidecar
        .as_ref()
        .map(|p| load_sentence_vectors(p))
        .transpose()?;
    let score_config = ScoreConfig {
        ember: EmbErConfig {
            similarity_threshold: config.tau,
            similar_sub_weight: config.lambda,
        },
        provider: match &sidecar {
            Some(vectors) => SentenceProvider::Precomputed(vectors),
            None => SentenceProvider::MeanPool,
        },
    };
    let scores = score_all(&records, &table, &score_config)?;

    let scores_path = artifacts::scores(&config.out);
    write_scores(&scores, &scores_path)?;

    // Flag table: one row per flagged (sample, model).
    let flags_path = artifacts::score_flags(&config.out);
    let mut flag_rows = String::from("sample_id,model_id,flag\n");
    let mut empty_ref = 0usize;
    let mut oov_sentence = 0usize;
    for row in &scores.rows {
        if row.metrics.flags.empty_ref {
            empty_ref += 1;
            flag_rows.push_str(&format!("{},{},empty_ref\n", row.sample_id, row.model_id));
        }
        if row.metrics.flags.oov_sentence {
            oov_sentence += 1;
            flag_rows.push_str(&format!("{},{},oov_sentence\n", row.sample_id, row.model_id));
        }
    }
    fs::write(&flags_path, flag_rows).map_err(|e| AuditError::io(&flags_path, e))?;

    let mut inputs: Vec<&Path> = vec![&manifest_path, &embeddings_path];
    if let Some(p) = &config.sidecar {
        inputs.push(p);
    }
    record_run(config, "score", &inputs)?;
    println!(
        "scored {} rows ({} models); flags: {empty_ref} empty_ref, {oov_sentence} oov_sentence",
        scores.rows.len(),
        scores.model_ids().len()
    );
    Ok(())
}

/// `features`: standardized regressors + persisted standardization stats.
pub fn cmd_features(config: &AuditConfig) -> Result<()> {
    let manifest_path = config.require_manifest()?.clone();
    ensure_out(config)?;
    let records = load_manifest(&manifest_path, config.manifest_format())?;
    let bins = load_age_bins(config)?;
    let wada = load_wada_table(config)?;
    let (features, stats) = build_features(&records, config.snr_source, &bins, &wada)?;

    write_features_csv(&features, &artifacts::features(&config.out))?;
    stats.write_json(&artifacts::standardization(&config.out))?;
    record_run(config, "features", &[&manifest_path])?;
    println!("built features for {} records", features.len());
    Ok(())
}

fn load_features_artifact(config: &AuditConfig) -> Result<Vec<FeatureVector>> {
    let path = require_artifact(artifacts::features(&config.out), "features")?;
    read_features_csv(&path)
}

fn load_scores_artifact(config: &AuditConfig) -> Result<ScoreTable> {
    let path = require_artifact(artifacts::scores(&config.out), "score")?;
    read_scores(&path)
}

/// `fit`: six elasticity regressions with clustered errors.
pub fn cmd_fit(config: &AuditConfig) -> Result<()> {
    let features = load_features_artifact(config)?;
    let scores = load_scores_artifact(config)?;
    let fits = meaf::fit_all_metrics(&features, &scores)?;
    for fit in fits.values() {
        for warning in &fit.warnings {
            eprintln!("warning ({}): {warning}", fit.metric);
        }
    }
    meaf::write_fit_reports(&fits, &artifacts::fits_dir(&config.out))?;
    meaf::write_fits_csv(&fits, &artifacts::fits_csv(&config.out))?;
    record_run(
        config,
        "fit",
        &[&artifacts::features(&config.out), &artifacts::scores(&config.out)],
    )?;
    for (metric, r2, f, n, clusters) in meaf::fit_stats_rows(&fits) {
        println!("{metric}: r2 = {r2:.4}, F = {f:.1}, n = {n}, clusters = {clusters}");
    }
    Ok(())
}

fn load_fit_reports(config: &AuditConfig) -> Result<BTreeMap<String, FitReport>> {
    let mut reports = BTreeMap::new();
    for metric in METRIC_NAMES {
        let path = require_artifact(artifacts::fit_report(&config.out, metric), "fit")?;
        reports.insert(metric.to_string(), meaf::read_fit_report(&path)?);
    }
    Ok(reports)
}

fn compute_all_sdi(
    config: &AuditConfig,
    features: &[FeatureVector],
    reports: &BTreeMap<String, FitReport>,
) -> Result<Vec<SdiScore>> {
    let mut all = Vec::new();
    let groups: Vec<String> = features.iter().map(|f| f.dataset_id.clone()).collect();
    for metric in METRIC_NAMES {
        let view = FitView::from_report(&reports[metric]);
        let mut scores = sdi::compute_sdi(features, &view)?;
        let degenerate = match config.decile_scope {
            DecileScope::Pooled => sdi::assign_deciles(&mut scores),
            DecileScope::PerDataset => sdi::assign_deciles_grouped(&mut scores, &groups)?,
        };
        if degenerate {
            eprintln!("warning ({metric}): all SDI values equal; decile assignment is degenerate");
        }
        all.extend(scores);
    }
    Ok(all)
}

/// `sdi`: per-(sample, metric) difficulty values and deciles.
pub fn cmd_sdi(config: &AuditConfig) -> Result<()> {
    let features = load_features_artifact(config)?;
    let reports = load_fit_reports(config)?;
    let all = compute_all_sdi(config, &features, &reports)?;
    sdi::write_sdi_csv(&all, &artifacts::sdi(&config.out))?;
    record_run(
        config,
        "sdi",
        &[&artifacts::features(&config.out), &artifacts::fit_report(&config.out, "wer")],
    )?;
    println!(
        "computed SDI for {} samples x {} metrics ({} deciles)",
        features.len(),
        METRIC_NAMES.len(),
        config.decile_scope.as_str()
    );
    Ok(())
}

const STRATA: [(&str, &str); 3] = [
    ("sex:female", "sex_female"),
    ("l1:nonnative", "l1_nonnative"),
    ("typicality:atypical", "typicality_atypical"),
];

/// `cartography`: (mu, sigma) coordinates, quadrants, SDI validation stats
/// and the scatter figures.
pub fn cmd_cartography(config: &AuditConfig) -> Result<()> {
    let scores = load_scores_artifact(config)?;
    let features = load_features_artifact(config)?;
    let sdi_path = require_artifact(artifacts::sdi(&config.out), "sdi")?;
    let sdi_scores = sdi::read_sdi_csv(&sdi_path)?;

    fs::create_dir_all(artifacts::figures_dir(&config.out))
        .map_err(|e| AuditError::io(&artifacts::figures_dir(&config.out), e))?;

    let mut all_points: Vec<CartographyPoint> = Vec::new();
    let mut correlations: Vec<SdiCorrelation> = Vec::new();
    for metric in METRIC_NAMES {
        let mut points = cartography::cartography(&scores, metric)?;
        let reliable = cartography::classify_quadrants(&mut points)?;
        if !reliable {
            eprintln!("warning ({metric}): degenerate mu/sigma distribution; quadrants unreliable");
        }
        let metric_sdi: Vec<SdiScore> = sdi_scores
            .iter()
            .filter(|s| s.metric == metric)
            .cloned()
            .collect();
        cartography::attach_sdi(&mut points, &metric_sdi)?;
        cartography::attach_group_tags(&mut points, &features)?;

        correlations.push(cartography::correlate_sdi(&points, &metric_sdi, 10_000, config.seed)?);

        cartography::emit_cartography_svg(
            &points,
            &ColorBy::SdiDecile,
            &artifacts::cartography_svg(&config.out, metric),
        )?;
        for (tag, suffix) in STRATA {
            let stratum: Vec<CartographyPoint> = points
                .iter()
                .filter(|p| p.group_tags.iter().any(|t| t == tag))
                .cloned()
                .collect();
            if !stratum.is_empty() {
                cartography::emit_cartography_svg(
                    &stratum,
                    &ColorBy::SdiDecile,
                    &artifacts::cartography_stratum_svg(&config.out, metric, suffix),
                )?;
            }
        }
        all_points.extend(points);
    }

    cartography::write_cartography_csv(&all_points, &artifacts::cartography(&config.out))?;
    let json = serde_json::to_string_pretty(&correlations)
        .map_err(|e| AuditError::input(format!("cannot serialize correlations: {e}")))?;
    let corr_path = artifacts::correlations(&config.out);
    fs::write(&corr_path, json).map_err(|e| AuditError::io(&corr_path, e))?;

    record_run(
        config,
        "cartography",
        &[
            &artifacts::scores(&config.out),
            &artifacts::features(&config.out),
            &artifacts::sdi(&config.out),
        ],
    )?;
    for c in &correlations {
        println!(
            "{}: rho(SDI, mu) = {:.3} (p = {:.4}), rho(SDI, sigma) = {:.3} (p = {:.4})",
            c.metric, c.spearman_mu, c.p_mu, c.spearman_sigma, c.p_sigma
        );
    }
    Ok(())
}

/// `pca`: metric-correlation structure.
pub fn cmd_pca(config: &AuditConfig) -> Result<()> {
    let scores = load_scores_artifact(config)?;
    let result = pca::pca_metrics(&scores)?;
    fs::create_dir_all(artifacts::figures_dir(&config.out))
        .map_err(|e| AuditError::io(&artifacts::figures_dir(&config.out), e))?;
    pca::write_loadings_csv(&result, &artifacts::pca_loadings_csv(&config.out))?;
    pca::write_variance_csv(&result, &artifacts::pca_variance_csv(&config.out))?;
    pca::emit_loadings_figure(&result, &artifacts::pca_svg(&config.out))?;
    record_run(config, "pca", &[&artifacts::scores(&config.out)])?;
    let pct: Vec<String> = result
        .explained_variance_ratio
        .iter()
        .map(|r| format!("{:.1}%", r * 100.0))
        .collect();
    println!("explained variance: {}", pct.join(", "));
    Ok(())
}

/// `report`: a single self-contained HTML report over all artifacts.
pub fn cmd_report(config: &AuditConfig) -> Result<()> {
    let html = crate::report::build_report(config)?;
    let path = artifacts::report(&config.out);
    fs::write(&path, html).map_err(|e| AuditError::io(&path, e))?;
    record_run(
        config,
        "report",
        &[
            &artifacts::features(&config.out),
            &artifacts::scores(&config.out),
            &artifacts::fits_csv(&config.out),
            &artifacts::sdi(&config.out),
            &artifacts::cartography(&config.out),
        ],
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

/// `gen-synthetic`: planted-coefficient corpus for tests and demos.
pub fn cmd_gen_synthetic(
    out: &Path,
    utterances: usize,
    models: usize,
    speakers: usize,
    datasets: usize,
    seed: u64,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| AuditError::io(out, e))?;
    let corpus = synth::generate(&SynthConfig { utterances, models, speakers, datasets, seed });

    let manifest_path = out.join("manifest.jsonl");
    let mut manifest = String::new();
    for record in &corpus.records {
        manifest.push_str(
            &serde_json::to_string(record)
                .map_err(|e| AuditError::input(format!("cannot serialize record: {e}")))?,
        );
        manifest.push('\n');
    }
    fs::write(&manifest_path, manifest).map_err(|e| AuditError::io(&manifest_path, e))?;

    let embeddings_path = out.join("embeddings.txt");
    fs::write(&embeddings_path, &corpus.embeddings_text)
        .map_err(|e| AuditError::io(&embeddings_path, e))?;

    write_scores(&corpus.scores, &out.join("planted_scores.csv"))?;

    #[derive(Serialize)]
    struct TruthJson<'a> {
        planted: &'a BTreeMap<String, f64>,
        intercept: f64,
        sigma_cluster: f64,
        sigma_eps: f64,
        response_mean: &'a BTreeMap<String, f64>,
        response_sd: &'a BTreeMap<String, f64>,
        effective: &'a BTreeMap<String, BTreeMap<String, f64>>,
        r2_analytic: &'a BTreeMap<String, f64>,
        n_rows: usize,
        seed: u64,
    }
    let truth = &corpus.truth;
    let truth_json = serde_json::to_string_pretty(&TruthJson {
        planted: &truth.planted,
        intercept: truth.intercept,
        sigma_cluster: truth.sigma_cluster,
        sigma_eps: truth.sigma_eps,
        response_mean: &truth.response_mean,
        response_sd: &truth.response_sd,
        effective: &truth.effective,
        r2_analytic: &truth.r2_analytic,
        n_rows: truth.n_rows,
        seed,
    })
    .map_err(|e| AuditError::input(format!("cannot serialize truth: {e}")))?;
    let truth_path = out.join("truth.json");
    fs::write(&truth_path, truth_json).map_err(|e| AuditError::io(&truth_path, e))?;

    println!(
        "generated {} utterances x {} models into {} (manifest.jsonl, embeddings.txt, planted_scores.csv, truth.json)",
        utterances,
        models,
        out.display()
    );
    Ok(())
}

/// `gen-wada-table`: regenerate the SNR lookup table.
pub fn cmd_gen_wada_table(out: &Path, samples: usize, seed: u64) -> Result<()> {
    let table = WadaTable::generate(samples, seed);
    table.write_csv(out)?;
    println!("wrote {} table rows to {}", table.len(), out.display());
    Ok(())
}
