//! Sample difficulty index: the fitted elasticities applied back to each
//! utterance's own features.
//!
//! SDI is the dot product of the continuous slopes with the sample's
//! standardized features plus the demographic intercepts of the sample's
//! levels. Intercept, dataset and model effects are excluded: the index
//! describes the utterance, not the systems that transcribed it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use crate::error::{AuditError, Result};
use crate::features::FeatureVector;
use crate::meaf::{FitReport, FitResult};

/// One sample's difficulty under one metric's fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SdiScore {
    pub sample_id: String,
    pub metric: String,
    pub value: f64,
    /// 1 (easiest tier) through 10 (hardest); 0 until deciles are assigned.
    pub decile: u8,
}

/// The slice of a fit that SDI needs: coefficients, factor references and
/// dropped columns. Buildable from an in-memory fit or a persisted report.
#[derive(Debug, Clone)]
pub struct FitView {
    pub metric: String,
    pub coefficients: BTreeMap<String, f64>,
    /// factor name -> reference level.
    pub references: BTreeMap<String, String>,
    pub dropped: BTreeSet<String>,
}

impl FitView {
    pub fn from_fit(fit: &FitResult) -> FitView {
        FitView {
            metric: fit.metric.clone(),
            coefficients: fit.coefficients.clone(),
            references: fit
                .factors
                .iter()
                .map(|f| (f.name.clone(), f.reference.clone()))
                .collect(),
            dropped: fit.dropped.iter().cloned().collect(),
        }
    }

    pub fn from_report(report: &FitReport) -> FitView {
        let mut references = BTreeMap::new();
        let mut coefficients = BTreeMap::new();
        for term in &report.terms {
            coefficients.insert(term.name.clone(), term.coef);
            if let (Some(reference), Some(factor)) =
                (term.reference_level.as_ref(), term.name.split(':').next())
            {
                if term.name.contains(':') {
                    references.insert(factor.to_string(), reference.clone());
                }
            }
        }
        FitView {
            metric: report.metric.clone(),
            coefficients,
            references,
            dropped: report.dropped.iter().cloned().collect(),
        }
    }
}

/// Evaluate the index for one sample.
///
/// Continuous terms use the fitted slopes; demographic levels add their
/// fitted intercept (reference levels contribute 0, "unknown" contributes
/// its own dummy). A level present in the data but absent from the fit
/// signals stale fit reuse and is an error.
pub fn sdi_value(fv: &FeatureVector, fit: &FitView) -> Result<f64> {
    let mut value = 0.0;
    for (column, x) in [
        ("x_snr", fv.x_snr),
        ("x_len", fv.x_len),
        ("x_age", fv.x_age),
        ("x_miss", fv.x_miss),
    ] {
        match fit.coefficients.get(column) {
            Some(beta) => value += beta * x,
            None if fit.dropped.contains(column) => {}
            None => {
                return Err(AuditError::input(format!(
                    "fit for {} lacks column {column}; refit before computing SDI",
                    fit.metric
                )))
            }
        }
    }
    for (factor, level) in [
        ("sex", fv.sex.as_str()),
        ("l1", fv.l1.as_str()),
        ("typicality", fv.typicality.as_str()),
    ] {
        if fit.dropped.contains(factor) {
            continue;
        }
        if fit.references.get(factor).is_some_and(|r| r == level) {
            continue;
        }
        let column = format!("{factor}:{level}");
        match fit.coefficients.get(&column) {
            Some(alpha) => value += alpha,
            None => {
                return Err(AuditError::input(format!(
                    "fit for {} has no term {column}; the fit is stale for this corpus",
                    fit.metric
                )))
            }
        }
    }
    Ok(value)
}

/// Compute raw SDI scores for every feature row (deciles unassigned).
pub fn compute_sdi(features: &[FeatureVector], fit: &FitView) -> Result<Vec<SdiScore>> {
    features
        .iter()
        .map(|fv| {
            Ok(SdiScore {
                sample_id: fv.sample_id.clone(),
                metric: fit.metric.clone(),
                value: sdi_value(fv, fit)?,
                decile: 0,
            })
        })
        .collect()
}

/// Rank-based decile assignment over the whole slice.
///
/// Ties break by stable input order; returns true when the assignment is
/// degenerate (all values equal).
pub fn assign_deciles(scores: &mut [SdiScore]) -> bool {
    let n = scores.len();
    if n == 0 {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .value
            .partial_cmp(&scores[b].value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for (rank0, &idx) in order.iter().enumerate() {
        scores[idx].decile = (10 * rank0 / n + 1).min(10) as u8;
    }
    let degenerate = scores
        .iter()
        .all(|s| s.value.to_bits() == scores[0].value.to_bits());
    degenerate
}

/// Decile assignment within groups (e.g. per dataset).
///
/// `groups` is parallel to `scores`; returns true if any group degenerated.
pub fn assign_deciles_grouped(scores: &mut [SdiScore], groups: &[String]) -> Result<bool> {
    if groups.len() != scores.len() {
        return Err(AuditError::input("group labels do not match score rows"));
    }
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    let mut degenerate = false;
    for indices in by_group.values() {
        let mut subset: Vec<SdiScore> = indices.iter().map(|&i| scores[i].clone()).collect();
        degenerate |= assign_deciles(&mut subset);
        for (&i, s) in indices.iter().zip(subset) {
            scores[i] = s;
        }
    }
    Ok(degenerate)
}

/// Write `sample_id,metric,sdi,decile` rows.
pub fn write_sdi_csv(scores: &[SdiScore], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["sample_id", "metric", "sdi", "decile"])
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for s in scores {
        writer
            .write_record([
                s.sample_id.as_str(),
                s.metric.as_str(),
                &s.value.to_string(),
                &s.decile.to_string(),
            ])
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

pub fn read_sdi_csv(path: &Path) -> Result<Vec<SdiScore>> {
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| AuditError::parse(path, 1, e.to_string()))?
        .clone();
    for expected in ["sample_id", "metric", "sdi", "decile"] {
        if !headers.iter().any(|h| h == expected) {
            return Err(AuditError::schema(path, format!("missing column {expected:?}")));
        }
    }
    let pos = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (i_id, i_metric, i_sdi, i_dec) = (pos("sample_id"), pos("metric"), pos("sdi"), pos("decile"));
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AuditError::parse(path, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        out.push(SdiScore {
            sample_id: record.get(i_id).unwrap_or("").to_owned(),
            metric: record.get(i_metric).unwrap_or("").to_owned(),
            value: record
                .get(i_sdi)
                .unwrap_or("")
                .parse()
                .map_err(|_| AuditError::parse(path, line, "non-numeric sdi"))?,
            decile: record
                .get(i_dec)
                .unwrap_or("")
                .parse()
                .map_err(|_| AuditError::parse(path, line, "bad decile"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Sex, Typicality, L1};

    fn fv(id: &str, x: [f64; 4], sex: Sex, l1: L1, typ: Typicality) -> FeatureVector {
        FeatureVector {
            sample_id: id.into(),
            speaker_id: "s".into(),
            dataset_id: "d".into(),
            snr_db: 0.0,
            log_duration: 0.0,
            age_years: 0.0,
            x_snr: x[0],
            x_len: x[1],
            x_age: x[2],
            x_miss: x[3],
            sex,
            l1,
            typicality: typ,
        }
    }

    fn view(pairs: &[(&str, f64)]) -> FitView {
        FitView {
            metric: "wer".into(),
            coefficients: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            references: BTreeMap::from([
                ("sex".to_string(), "female".to_string()),
                ("l1".to_string(), "native".to_string()),
                ("typicality".to_string(), "typical".to_string()),
            ]),
            dropped: BTreeSet::new(),
        }
    }

    fn full_view() -> FitView {
        view(&[
            ("x_snr", -0.3),
            ("x_len", 0.2),
            ("x_age", 0.1),
            ("x_miss", 0.05),
            ("sex:male", -0.1),
            ("l1:nonnative", 0.3),
            ("typicality:atypical", 0.8),
        ])
    }

    #[test]
    fn zero_features_reference_levels_give_zero() {
        let f = fv("u1", [0.0; 4], Sex::Female, L1::Native, Typicality::Typical);
        assert_eq!(sdi_value(&f, &full_view()).unwrap(), 0.0);
    }

    #[test]
    fn single_term_dot_product() {
        let f = fv("u1", [2.0, 0.0, 0.0, 0.0], Sex::Female, L1::Native, Typicality::Typical);
        assert!((sdi_value(&f, &full_view()).unwrap() + 0.6).abs() < 1e-12);
    }

    #[test]
    fn demographic_intercepts_add_up() {
        let f = fv("u1", [0.0; 4], Sex::Male, L1::Nonnative, Typicality::Atypical);
        let v = sdi_value(&f, &full_view()).unwrap();
        assert!((v - (-0.1 + 0.3 + 0.8)).abs() < 1e-12);
    }

    #[test]
    fn stale_fit_is_detected() {
        // Fit knows no `sex:unknown` dummy and sex was not dropped.
        let f = fv("u1", [0.0; 4], Sex::Unknown, L1::Native, Typicality::Typical);
        let err = sdi_value(&f, &full_view()).unwrap_err();
        assert!(err.to_string().contains("sex:unknown"), "{err}");
    }

    #[test]
    fn dropped_factor_contributes_zero() {
        let mut v = full_view();
        v.dropped.insert("sex".into());
        v.coefficients.remove("sex:male");
        let f = fv("u1", [0.0; 4], Sex::Male, L1::Native, Typicality::Typical);
        assert_eq!(sdi_value(&f, &v).unwrap(), 0.0);
    }

    fn scores_from(values: &[f64]) -> Vec<SdiScore> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| SdiScore {
                sample_id: format!("u{i}"),
                metric: "wer".into(),
                value: v,
                decile: 0,
            })
            .collect()
    }

    #[test]
    fn ten_distinct_values_fill_ten_deciles() {
        let mut scores = scores_from(&[0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 1.0]);
        let degenerate = assign_deciles(&mut scores);
        assert!(!degenerate);
        let mut ranked = scores.clone();
        ranked.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
        let deciles: Vec<u8> = ranked.iter().map(|s| s.decile).collect();
        assert_eq!(deciles, (1..=10).collect::<Vec<u8>>());
    }

    #[test]
    fn ties_stay_balanced_and_flag_degenerate() {
        let mut scores = scores_from(&[0.5; 10]);
        let degenerate = assign_deciles(&mut scores);
        assert!(degenerate);
        let deciles: Vec<u8> = scores.iter().map(|s| s.decile).collect();
        assert_eq!(deciles, (1..=10).collect::<Vec<u8>>(), "stable order breaks ties");
    }

    #[test]
    fn twenty_values_two_per_decile() {
        let values: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut scores = scores_from(&values);
        assign_deciles(&mut scores);
        for d in 1..=10u8 {
            assert_eq!(scores.iter().filter(|s| s.decile == d).count(), 2, "decile {d}");
        }
    }

    #[test]
    fn decile_sizes_partition_evenly() {
        for n in [1usize, 5, 9, 10, 11, 37, 100, 101] {
            let values: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut scores = scores_from(&values);
            assign_deciles(&mut scores);
            let mut counts = [0usize; 11];
            for s in &scores {
                counts[s.decile as usize] += 1;
            }
            let (lo, hi) = (n / 10, n.div_ceil(10));
            for d in 1..=10 {
                assert!(
                    counts[d] == lo || counts[d] == hi,
                    "n={n} decile {d} has {} (want {lo} or {hi})",
                    counts[d]
                );
            }
        }
    }

    #[test]
    fn mean_sdi_non_decreasing_across_deciles() {
        let values: Vec<f64> = (0..73).map(|i| ((i * 37) % 73) as f64 * 0.1).collect();
        let mut scores = scores_from(&values);
        assign_deciles(&mut scores);
        let mut sums = [0.0f64; 11];
        let mut counts = [0usize; 11];
        for s in &scores {
            sums[s.decile as usize] += s.value;
            counts[s.decile as usize] += 1;
        }
        let mut prev = f64::NEG_INFINITY;
        for d in 1..=10 {
            let mean = sums[d] / counts[d] as f64;
            assert!(mean >= prev, "decile {d}");
            prev = mean;
        }
    }

    #[test]
    fn grouped_deciles_are_per_group() {
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut scores = scores_from(&values);
        let groups: Vec<String> =
            (0..40).map(|i| if i < 20 { "d1" } else { "d2" }.to_string()).collect();
        assign_deciles_grouped(&mut scores, &groups).unwrap();
        // Each group of 20 gets two per decile.
        for d in 1..=10u8 {
            let in_d1 = scores[..20].iter().filter(|s| s.decile == d).count();
            assert_eq!(in_d1, 2, "decile {d} in group d1");
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sdi.csv");
        let mut scores = scores_from(&[0.25, -0.5, 1.75]);
        assign_deciles(&mut scores);
        write_sdi_csv(&scores, &path).unwrap();
        let back = read_sdi_csv(&path).unwrap();
        assert_eq!(back, scores);
    }
}
