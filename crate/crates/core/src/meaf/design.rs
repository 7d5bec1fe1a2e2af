//! Design-matrix construction for the elasticity regression.
//!
//! Rows are (utterance, model) pairs in score-table order. Columns:
//! intercept, the four continuous slopes, then drop-first dummies for the
//! demographic factors and the dataset/model controls. The response is the
//! standardized metric column. Full column rank is verified by a pivoted
//! orthogonalization that names the dependent columns on failure.

use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

use crate::error::{AuditError, Result};
use crate::features::{ColumnStats, FeatureVector};
use crate::ingest::ScoreTable;

/// Dummy coding of one categorical factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorInfo {
    pub name: String,
    /// Level absorbed into the intercept.
    pub reference: String,
    /// Levels that received dummy columns, in canonical order.
    pub dummy_levels: Vec<String>,
    /// True when only one level was present and the factor was dropped.
    pub single_level: bool,
}

/// A fully materialized regression problem for one metric.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub metric: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<String>,
    /// Speaker id per row; the clustering variable.
    pub cluster_ids: Vec<String>,
    pub factors: Vec<FactorInfo>,
    /// Columns or factors dropped before fitting (constant indicator,
    /// single-level factors).
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
    /// Mean/std used to standardize the response.
    pub response_stats: ColumnStats,
}

/// Regressor structure shared by all six metric fits.
#[derive(Debug, Clone)]
pub(crate) struct DesignBase {
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub cluster_ids: Vec<String>,
    pub factors: Vec<FactorInfo>,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Canonical level orders; the first *present* level is the reference.
const SEX_ORDER: [&str; 3] = ["female", "male", "unknown"];
const L1_ORDER: [&str; 3] = ["native", "nonnative", "unknown"];
const TYP_ORDER: [&str; 3] = ["typical", "atypical", "unknown"];

struct FactorSpec {
    name: &'static str,
    /// Level per design row.
    row_levels: Vec<String>,
    /// Canonical order of possible levels.
    order: Vec<String>,
}

/// Score rows in canonical (sample_id, model_id) order, so fits are
/// bit-identical regardless of input row order.
pub(crate) fn canonical_rows(scores: &ScoreTable) -> Vec<&crate::ingest::ScoreRow> {
    let mut rows: Vec<&crate::ingest::ScoreRow> = scores.rows.iter().collect();
    rows.sort_by(|a, b| {
        a.sample_id
            .cmp(&b.sample_id)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    rows
}

pub(crate) fn build_base(features: &[FeatureVector], scores: &ScoreTable) -> Result<DesignBase> {
    if scores.rows.is_empty() {
        return Err(AuditError::input("empty score table"));
    }
    let rows = canonical_rows(scores);
    let by_id: HashMap<&str, &FeatureVector> =
        features.iter().map(|f| (f.sample_id.as_str(), f)).collect();

    // Join score rows to features.
    let mut joined: Vec<&FeatureVector> = Vec::with_capacity(rows.len());
    for row in &rows {
        let f = by_id.get(row.sample_id.as_str()).ok_or_else(|| {
            AuditError::input(format!(
                "score row {:?} has no matching feature row; rebuild features",
                row.sample_id
            ))
        })?;
        joined.push(f);
    }

    let n = joined.len();
    let cluster_ids: Vec<String> = joined.iter().map(|f| f.speaker_id.clone()).collect();

    // Continuous block.
    let mut columns: Vec<String> = vec!["intercept".into()];
    let mut data: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();

    for (name, col) in [
        ("x_snr", joined.iter().map(|f| f.x_snr).collect::<Vec<_>>()),
        ("x_len", joined.iter().map(|f| f.x_len).collect()),
        ("x_age", joined.iter().map(|f| f.x_age).collect()),
        ("x_miss", joined.iter().map(|f| f.x_miss).collect()),
    ] {
        let constant = col.windows(2).all(|w| w[0] == w[1]);
        if constant {
            dropped.push(name.to_string());
            warnings.push(format!("column {name} is constant; dropped from the design"));
        } else {
            columns.push(name.to_string());
            data.push(col);
        }
    }

    // Categorical blocks with drop-first coding.
    let mut dataset_levels: Vec<String> = joined.iter().map(|f| f.dataset_id.clone()).collect::<Vec<_>>();
    dataset_levels.sort();
    dataset_levels.dedup();
    let mut model_levels: Vec<String> = rows.iter().map(|r| r.model_id.clone()).collect();
    model_levels.sort();
    model_levels.dedup();

    let specs = [
        FactorSpec {
            name: "sex",
            row_levels: joined.iter().map(|f| f.sex.as_str().to_string()).collect(),
            order: SEX_ORDER.iter().map(|s| s.to_string()).collect(),
        },
        FactorSpec {
            name: "l1",
            row_levels: joined.iter().map(|f| f.l1.as_str().to_string()).collect(),
            order: L1_ORDER.iter().map(|s| s.to_string()).collect(),
        },
        FactorSpec {
            name: "typicality",
            row_levels: joined.iter().map(|f| f.typicality.as_str().to_string()).collect(),
            order: TYP_ORDER.iter().map(|s| s.to_string()).collect(),
        },
        FactorSpec {
            name: "dataset",
            row_levels: joined.iter().map(|f| f.dataset_id.clone()).collect(),
            order: dataset_levels,
        },
        FactorSpec {
            name: "model",
            row_levels: rows.iter().map(|r| r.model_id.clone()).collect(),
            order: model_levels,
        },
    ];

    let mut factors = Vec::new();
    for spec in specs {
        let present: Vec<String> = spec
            .order
            .iter()
            .filter(|level| spec.row_levels.iter().any(|l| l == *level))
            .cloned()
            .collect();
        if present.is_empty() {
            return Err(AuditError::input(format!("factor {} has no observed levels", spec.name)));
        }
        let reference = present[0].clone();
        if present.len() == 1 {
            dropped.push(spec.name.to_string());
            warnings.push(format!(
                "factor {} has a single level ({}); dummies dropped",
                spec.name, reference
            ));
            factors.push(FactorInfo {
                name: spec.name.to_string(),
                reference,
                dummy_levels: Vec::new(),
                single_level: true,
            });
            continue;
        }
        let dummy_levels: Vec<String> = present[1..].to_vec();
        for level in &dummy_levels {
            columns.push(format!("{}:{}", spec.name, level));
            data.push(
                spec.row_levels
                    .iter()
                    .map(|l| if l == level { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        factors.push(FactorInfo {
            name: spec.name.to_string(),
            reference,
            dummy_levels,
            single_level: false,
        });
    }

    let k = columns.len();
    let mut x = DMatrix::zeros(n, k);
    for (j, col) in data.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }

    validate_full_rank(&x, &columns)?;

    Ok(DesignBase { x, columns, cluster_ids, factors, dropped, warnings })
}

/// Standardize the response column for one metric (canonical row order).
pub(crate) fn standardized_response(scores: &ScoreTable, metric: &str) -> Result<(DVector<f64>, ColumnStats)> {
    if !crate::metrics::METRIC_NAMES.contains(&metric) {
        return Err(AuditError::input(format!("unknown metric {metric:?}")));
    }
    let raw: Vec<f64> = canonical_rows(scores)
        .iter()
        .map(|r| r.metrics.get(metric))
        .collect();
    let stats = ColumnStats::from_column(&format!("response {metric}"), &raw)?;
    let y = DVector::from_iterator(raw.len(), raw.iter().map(|&v| stats.apply(v)));
    Ok((y, stats))
}

/// Build the design matrix and standardized response for one metric.
pub fn build_design(
    features: &[FeatureVector],
    scores: &ScoreTable,
    metric: &str,
) -> Result<DesignMatrix> {
    let base = build_base(features, scores)?;
    let (y, response_stats) = standardized_response(scores, metric)?;
    Ok(design_from_base(base, y, response_stats, metric))
}

pub(crate) fn design_from_base(
    base: DesignBase,
    y: DVector<f64>,
    response_stats: ColumnStats,
    metric: &str,
) -> DesignMatrix {
    DesignMatrix {
        metric: metric.to_string(),
        x: base.x,
        y,
        columns: base.columns,
        cluster_ids: base.cluster_ids,
        factors: base.factors,
        dropped: base.dropped,
        warnings: base.warnings,
        response_stats,
    }
}

/// Verify full column rank with a pivoted modified Gram-Schmidt sweep;
/// on failure, name the linearly dependent columns.
pub(crate) fn validate_full_rank(x: &DMatrix<f64>, columns: &[String]) -> Result<()> {
    let k = x.ncols();
    let mut residual: Vec<DVector<f64>> = (0..k).map(|j| x.column(j).into_owned()).collect();
    let orig_norm: Vec<f64> = residual.iter().map(|c| c.norm()).collect();
    let mut remaining: Vec<usize> = (0..k).collect();

    for _ in 0..k {
        // Pivot: the remaining column with the largest residual norm.
        let mut best = None;
        let mut best_norm = f64::NEG_INFINITY;
        for (pos, &j) in remaining.iter().enumerate() {
            let norm = residual[j].norm();
            if norm > best_norm {
                best_norm = norm;
                best = Some(pos);
            }
        }
        let Some(best_pos) = best else { break };
        let j = remaining[best_pos];
        if best_norm <= 1e-8 * orig_norm[j].max(1.0) {
            break;
        }
        remaining.swap_remove(best_pos);
        let q = residual[j].clone() / best_norm;
        for &other in &remaining {
            let proj = q.dot(&residual[other]);
            residual[other] -= &q * proj;
        }
    }

    let dependent: Vec<&str> = remaining
        .iter()
        .filter(|&&j| residual[j].norm() <= 1e-8 * orig_norm[j].max(1.0))
        .map(|&j| columns[j].as_str())
        .collect();
    if !dependent.is_empty() {
        let mut names: Vec<&str> = dependent;
        names.sort();
        return Err(AuditError::numerical(format!(
            "design matrix is rank deficient; linearly dependent column(s): {}",
            names.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ScoreRow, Sex, Typicality, L1};
    use crate::metrics::{MetricFlags, MetricVector};

    pub(crate) fn fv(
        id: &str,
        speaker: &str,
        dataset: &str,
        x: [f64; 4],
        sex: Sex,
        l1: L1,
        typ: Typicality,
    ) -> FeatureVector {
        FeatureVector {
            sample_id: id.into(),
            speaker_id: speaker.into(),
            dataset_id: dataset.into(),
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

    fn score_row(id: &str, model: &str, v: f64) -> ScoreRow {
        ScoreRow {
            sample_id: id.into(),
            model_id: model.into(),
            metrics: MetricVector {
                wer: v,
                cer: v,
                mer: v,
                wil: v,
                ember: v,
                semdist: v,
                flags: MetricFlags::default(),
            },
        }
    }

    #[test]
    fn column_count_matches_coding_rule() {
        // 2 datasets, 4 models, 3 binary demographics, 4 continuous:
        // k = 1 + 4 + 3 + 1 + 3 = 12. Factor patterns follow separate bits
        // of the utterance index so no two columns alias each other.
        let mut features = Vec::new();
        let mut rows = Vec::new();
        for i in 0usize..16 {
            let id = format!("u{i:02}");
            let (b0, b1, b2, b3) = (i & 1, (i >> 1) & 1, (i >> 2) & 1, (i >> 3) & 1);
            let sex = if b0 == 0 { Sex::Female } else { Sex::Male };
            let l1 = if b1 == 0 { L1::Native } else { L1::Nonnative };
            let typ = if b2 == 0 { Typicality::Typical } else { Typicality::Atypical };
            let ds = if b3 == 0 { "d1" } else { "d2" };
            let jitter = ((i * 37) % 11) as f64 * 0.01;
            features.push(fv(
                &id,
                &format!("s{i}"),
                ds,
                [i as f64 + jitter, (i * i) as f64, (i % 5) as f64, (b0 ^ b1) as f64],
                sex,
                l1,
                typ,
            ));
            for m in ["m1", "m2", "m3", "m4"] {
                rows.push(score_row(&id, m, (i as f64) * 0.1 + m.len() as f64 + jitter));
            }
        }
        let scores = ScoreTable { rows };
        let design = build_design(&features, &scores, "wer").unwrap();
        assert_eq!(design.columns.len(), 12, "{:?}", design.columns);
        assert_eq!(design.x.nrows(), 16 * 4);
        // Response is standardized.
        let mean = design.y.iter().sum::<f64>() / design.y.len() as f64;
        let var = design.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / design.y.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_level_factor_is_dropped_with_warning() {
        // All-female corpus; other factors vary.
        let mut features = Vec::new();
        let mut rows = Vec::new();
        for i in 0usize..10 {
            let id = format!("u{i}");
            let l1 = if (i >> 1) % 2 == 0 { L1::Native } else { L1::Nonnative };
            let typ = if (i >> 2) % 2 == 0 { Typicality::Typical } else { Typicality::Atypical };
            let x = [
                ((i * 13 + 5) % 17) as f64,
                ((i * 7 + 3) % 19) as f64,
                ((i * 11 + 1) % 23) as f64,
                (i % 2) as f64,
            ];
            features.push(fv(&id, &format!("s{i}"), "d1", x, Sex::Female, l1, typ));
            for m in ["m1", "m2"] {
                rows.push(score_row(&id, m, ((i * 29 + m.len() * 31) % 37) as f64 * 0.1));
            }
        }
        let design = build_design(&features, &ScoreTable { rows }, "wer").unwrap();
        assert!(design.dropped.contains(&"sex".to_string()));
        assert!(design.warnings.iter().any(|w| w.contains("sex")));
        assert!(!design.columns.iter().any(|c| c.starts_with("sex:")));
        // The all-female factor is still described.
        let sex = design.factors.iter().find(|f| f.name == "sex").unwrap();
        assert!(sex.single_level);
        assert_eq!(sex.reference, "female");
    }

    #[test]
    fn rank_deficiency_names_columns() {
        // x_len duplicates x_snr exactly.
        let features = vec![
            fv("u1", "s1", "d1", [0.0, 0.0, 0.5, 0.0], Sex::Female, L1::Native, Typicality::Typical),
            fv("u2", "s2", "d1", [1.0, 1.0, -0.5, 1.0], Sex::Male, L1::Native, Typicality::Typical),
            fv("u3", "s3", "d1", [2.0, 2.0, 0.25, 0.0], Sex::Female, L1::Native, Typicality::Typical),
            fv("u4", "s4", "d1", [3.0, 3.0, -0.25, 1.0], Sex::Male, L1::Native, Typicality::Typical),
        ];
        let rows = (1..=4).map(|i| score_row(&format!("u{i}"), "m1", i as f64 * 0.2)).collect();
        let err = build_design(&features, &ScoreTable { rows }, "wer").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rank deficient"), "{msg}");
        assert!(msg.contains("x_snr") || msg.contains("x_len"), "{msg}");
    }

    #[test]
    fn join_miss_is_reported() {
        let features = vec![fv(
            "u1",
            "s1",
            "d1",
            [0.0, 0.0, 0.0, 0.0],
            Sex::Female,
            L1::Native,
            Typicality::Typical,
        )];
        let rows = vec![score_row("u1", "m1", 0.1), score_row("u9", "m1", 0.2)];
        let err = build_design(&features, &ScoreTable { rows }, "wer").unwrap_err();
        assert!(err.to_string().contains("u9"), "{err}");
    }
}
