//! Self-contained HTML audit report.
//!
//! Embeds the dataset characteristics summary, per-model metric means, the
//! elasticity fit tables, SDI decile gradients, cartography quadrants with
//! the validation correlations, the PCA variance table, and every figure
//! inline. Content is deterministic for fixed inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use asr_audit_core::cartography::{read_cartography_csv, Quadrant, SdiCorrelation};
use asr_audit_core::error::{AuditError, Result};
use asr_audit_core::features::{read_features_csv, FeatureVector};
use asr_audit_core::ingest::read_scores;
use asr_audit_core::meaf::{read_fit_report, FitReport};
use asr_audit_core::metrics::METRIC_NAMES;
use asr_audit_core::{Sex, Typicality, L1};

use crate::commands::{artifacts, TOOLKIT_VERSION};
use crate::config::AuditConfig;

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn require(path: std::path::PathBuf, producer: &str) -> Result<std::path::PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(AuditError::MissingArtifact { path, producer: format!("asr-audit {producer}") })
    }
}

struct DatasetSummary {
    samples: usize,
    speakers: usize,
    mean_snr_db: f64,
    mean_duration_s: f64,
    mean_observed_age: f64,
    missing_age_ratio: f64,
    male_ratio: f64,
    female_ratio: f64,
    nonnative_ratio: f64,
    atypical_ratio: f64,
    unknown_sex_ratio: f64,
}

fn summarize_datasets(features: &[FeatureVector]) -> BTreeMap<String, DatasetSummary> {
    let mut grouped: BTreeMap<String, Vec<&FeatureVector>> = BTreeMap::new();
    for f in features {
        grouped.entry(f.dataset_id.clone()).or_default().push(f);
    }
    grouped
        .into_iter()
        .map(|(dataset, rows)| {
            let n = rows.len() as f64;
            let mut speakers: Vec<&str> = rows.iter().map(|f| f.speaker_id.as_str()).collect();
            speakers.sort_unstable();
            speakers.dedup();
            let observed: Vec<f64> = rows
                .iter()
                .filter(|f| f.x_miss == 0.0)
                .map(|f| f.age_years)
                .collect();
            let ratio = |count: usize| count as f64 / n;
            let summary = DatasetSummary {
                samples: rows.len(),
                speakers: speakers.len(),
                mean_snr_db: rows.iter().map(|f| f.snr_db).sum::<f64>() / n,
                mean_duration_s: rows.iter().map(|f| f.log_duration.exp()).sum::<f64>() / n,
                mean_observed_age: if observed.is_empty() {
                    f64::NAN
                } else {
                    observed.iter().sum::<f64>() / observed.len() as f64
                },
                missing_age_ratio: rows.iter().map(|f| f.x_miss).sum::<f64>() / n,
                male_ratio: ratio(rows.iter().filter(|f| f.sex == Sex::Male).count()),
                female_ratio: ratio(rows.iter().filter(|f| f.sex == Sex::Female).count()),
                nonnative_ratio: ratio(rows.iter().filter(|f| f.l1 == L1::Nonnative).count()),
                atypical_ratio: ratio(
                    rows.iter().filter(|f| f.typicality == Typicality::Atypical).count(),
                ),
                unknown_sex_ratio: ratio(rows.iter().filter(|f| f.sex == Sex::Unknown).count()),
            };
            (dataset, summary)
        })
        .collect()
}

fn inline_svg(html: &mut String, path: &Path) {
    if let Ok(svg) = fs::read_to_string(path) {
        html.push_str("<div class=\"figure\">");
        html.push_str(&svg);
        html.push_str("</div>\n");
    }
}

/// Assemble the report from staged artifacts.
pub fn build_report(config: &AuditConfig) -> Result<String> {
    let out = &config.out;
    let features = read_features_csv(&require(artifacts::features(out), "features")?)?;
    let scores = read_scores(&require(artifacts::scores(out), "score")?)?;
    let mut fit_reports: Vec<FitReport> = Vec::new();
    for metric in METRIC_NAMES {
        fit_reports.push(read_fit_report(&require(artifacts::fit_report(out, metric), "fit")?)?);
    }
    let cartography_points =
        read_cartography_csv(&require(artifacts::cartography(out), "cartography")?)?;
    let correlations: Vec<SdiCorrelation> = {
        let path = require(artifacts::correlations(out), "cartography")?;
        let text = fs::read_to_string(&path).map_err(|e| AuditError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AuditError::schema(&path, e.to_string()))?
    };
    let variance_csv = fs::read_to_string(require(artifacts::pca_variance_csv(out), "pca")?)
        .map_err(|e| AuditError::io(&artifacts::pca_variance_csv(out), e))?;

    let mut html = String::with_capacity(64 * 1024);
    html.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n");
    html.push_str("<title>ASR audit report</title>\n<style>\n");
    html.push_str(
        "body{font-family:sans-serif;margin:2em;max-width:70em}\
         table{border-collapse:collapse;margin:1em 0}\
         td,th{border:1px solid #bbb;padding:3px 8px;font-size:13px;text-align:right}\
         th{background:#eee}td:first-child,th:first-child{text-align:left}\
         .figure{margin:1em 0}h2{border-bottom:2px solid #444}\n",
    );
    html.push_str("</style></head><body>\n");
    let _ = writeln!(html, "<h1>ASR audit report</h1>");
    let _ = writeln!(
        html,
        "<p>toolkit {} &middot; seed {} &middot; metrics stored as fractions (no x100 scaling) \
         &middot; deciles {}</p>",
        TOOLKIT_VERSION,
        config.seed,
        config.decile_scope.as_str()
    );

    // Dataset characteristics.
    html.push_str("<h2>Dataset characteristics</h2>\n<table><tr><th>dataset</th><th>samples</th>\
                   <th>speakers</th><th>mean SNR (dB)</th><th>mean duration (s)</th>\
                   <th>mean age (observed)</th><th>age missing</th><th>female</th><th>male</th>\
                   <th>sex unknown</th><th>nonnative</th><th>atypical</th></tr>\n");
    for (dataset, s) in summarize_datasets(&features) {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.2}</td><td>{:.2}</td><td>{:.1}</td>\
             <td>{:.1}%</td><td>{:.1}%</td><td>{:.1}%</td><td>{:.1}%</td><td>{:.1}%</td><td>{:.1}%</td></tr>",
            esc(&dataset),
            s.samples,
            s.speakers,
            s.mean_snr_db,
            s.mean_duration_s,
            s.mean_observed_age,
            s.missing_age_ratio * 100.0,
            s.female_ratio * 100.0,
            s.male_ratio * 100.0,
            s.unknown_sex_ratio * 100.0,
            s.nonnative_ratio * 100.0,
            s.atypical_ratio * 100.0
        );
    }
    html.push_str("</table>\n");

    // Per-model metric means.
    html.push_str("<h2>Mean scores by model</h2>\n<table><tr><th>model</th>");
    for metric in METRIC_NAMES {
        let _ = write!(html, "<th>{metric}</th>");
    }
    html.push_str("</tr>\n");
    for model in scores.model_ids() {
        let _ = write!(html, "<tr><td>{}</td>", esc(&model));
        for metric in METRIC_NAMES {
            let values: Vec<f64> = scores
                .rows
                .iter()
                .filter(|r| r.model_id == model)
                .map(|r| r.metrics.get(metric))
                .collect();
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let _ = write!(html, "<td>{mean:.4}</td>");
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</table>\n");

    // Elasticity fits.
    html.push_str("<h2>Metric elasticity fits</h2>\n");
    html.push_str("<p>Coefficients are standardized; uncertainty is the speaker-clustered \
                   (CR1) standard error. Reference levels absorb into the intercept.</p>\n");
    html.push_str("<table><tr><th>metric</th><th>R&sup2;</th><th>F</th><th>n</th><th>clusters</th><th>dropped</th></tr>\n");
    for report in &fit_reports {
        let f = report
            .f
            .map(|f| format!("{f:.1}"))
            .unwrap_or_else(|| "&mdash;".to_string());
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{:.4}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            report.metric,
            report.r2,
            f,
            report.n,
            report.clusters,
            esc(&report.dropped.join(", "))
        );
    }
    html.push_str("</table>\n");
    for report in &fit_reports {
        let _ = writeln!(html, "<h3>{}</h3>", report.metric);
        html.push_str(
            "<table><tr><th>term</th><th>coefficient</th><th>clustered SE</th><th>reference</th></tr>\n",
        );
        for term in &report.terms {
            let _ = writeln!(
                html,
                "<tr><td>{}</td><td>{:+.4}</td><td>{:.4}</td><td>{}</td></tr>",
                esc(&term.name),
                term.coef,
                term.se,
                esc(term.reference_level.as_deref().unwrap_or(""))
            );
        }
        html.push_str("</table>\n");
    }

    // SDI validation.
    html.push_str("<h2>Sample difficulty vs model behavior</h2>\n");
    html.push_str(
        "<table><tr><th>metric</th><th>rho(SDI, mu)</th><th>p</th>\
         <th>rho(SDI, sigma)</th><th>p</th><th>permutations</th></tr>\n",
    );
    for c in &correlations {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{:+.3}</td><td>{:.4}</td><td>{:+.3}</td><td>{:.4}</td><td>{}</td></tr>",
            c.metric, c.spearman_mu, c.p_mu, c.spearman_sigma, c.p_sigma, c.permutations
        );
    }
    html.push_str("</table>\n");
    for c in &correlations {
        let _ = writeln!(html, "<h3>{} per-decile means</h3>", c.metric);
        html.push_str("<table><tr><th>decile</th><th>n</th><th>mean mu</th><th>mean sigma</th></tr>\n");
        for row in &c.deciles {
            let _ = writeln!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{:.4}</td><td>{:.4}</td></tr>",
                row.decile, row.n, row.mean_mu, row.mean_sigma
            );
        }
        html.push_str("</table>\n");
    }

    // Quadrant counts.
    html.push_str("<h2>Cartography quadrants</h2>\n");
    html.push_str("<p>Median-split regions: easy (low mu, low sigma), ambiguous (low mu, high \
                   sigma), hard (high mu, high sigma), hard_consensus (high mu, low sigma). \
                   The two high-sigma cells belong together when reading disagreement.</p>\n");
    html.push_str("<table><tr><th>metric</th><th>easy</th><th>ambiguous</th><th>hard</th><th>hard_consensus</th></tr>\n");
    for metric in METRIC_NAMES {
        let count = |quadrant: Quadrant| {
            cartography_points
                .iter()
                .filter(|p| p.metric == metric && p.quadrant == quadrant)
                .count()
        };
        let _ = writeln!(
            html,
            "<tr><td>{metric}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            count(Quadrant::Easy),
            count(Quadrant::Ambiguous),
            count(Quadrant::Hard),
            count(Quadrant::HardConsensus)
        );
    }
    html.push_str("</table>\n");

    for metric in METRIC_NAMES {
        let _ = writeln!(html, "<h3>{metric} cartography</h3>");
        inline_svg(&mut html, &artifacts::cartography_svg(out, metric));
        for (_, suffix) in [
            ("sex:female", "sex_female"),
            ("l1:nonnative", "l1_nonnative"),
            ("typicality:atypical", "typicality_atypical"),
        ] {
            inline_svg(&mut html, &artifacts::cartography_stratum_svg(out, metric, suffix));
        }
    }

    // PCA.
    html.push_str("<h2>Metric covariance structure (PCA)</h2>\n");
    html.push_str("<table><tr><th>component</th><th>explained variance</th></tr>\n");
    for line in variance_csv.lines().skip(1) {
        if let Some((component, ratio)) = line.split_once(',') {
            if let Ok(r) = ratio.parse::<f64>() {
                let _ = writeln!(
                    html,
                    "<tr><td>{}</td><td>{:.1}%</td></tr>",
                    esc(component),
                    r * 100.0
                );
            }
        }
    }
    html.push_str("</table>\n");
    inline_svg(&mut html, &artifacts::pca_svg(out));

    html.push_str("</body></html>\n");
    Ok(html)
}
