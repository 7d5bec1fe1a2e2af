//! Metric elasticity audit: per-metric fixed-effects regressions of scores
//! on acoustic/demographic features with dataset and model controls and
//! speaker-clustered uncertainty.

mod design;
mod ols;

pub use design::{build_design, DesignMatrix, FactorInfo};
pub use ols::{cluster_robust_se, fit_ols, FitResult};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::features::FeatureVector;
use crate::ingest::ScoreTable;
use crate::metrics::METRIC_NAMES;

/// Fit all six metrics over one shared regressor structure.
///
/// The design is built once; each metric contributes its own standardized
/// response. The returned map is keyed by metric name.
pub fn fit_all_metrics(
    features: &[FeatureVector],
    scores: &ScoreTable,
) -> Result<BTreeMap<String, FitResult>> {
    let base = design::build_base(features, scores)?;
    let mut fits = BTreeMap::new();
    for metric in METRIC_NAMES {
        let (y, stats) = design::standardized_response(scores, metric)?;
        let design = design::design_from_base(base.clone(), y, stats, metric);
        fits.insert(metric.to_string(), fit_ols(&design)?);
    }
    Ok(fits)
}

/// One term of the exported fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTerm {
    pub name: String,
    pub coef: f64,
    /// Speaker-clustered standard error.
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_level: Option<String>,
}

/// JSON-exportable summary of one metric's fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub metric: String,
    pub terms: Vec<FitTerm>,
    pub r2: f64,
    /// Overall F statistic; `None` when undefined (perfect fit).
    pub f: Option<f64>,
    pub n: usize,
    pub clusters: usize,
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl FitReport {
    pub fn from_fit(fit: &FitResult) -> FitReport {
        let reference_for = |column: &str| -> Option<String> {
            let factor_name = column.split(':').next()?;
            fit.factors
                .iter()
                .find(|f| f.name == factor_name && column.contains(':'))
                .map(|f| f.reference.clone())
        };
        let terms = fit
            .columns
            .iter()
            .map(|c| FitTerm {
                name: c.clone(),
                coef: fit.coefficients[c],
                se: fit.clustered_se[c],
                reference_level: reference_for(c),
            })
            .collect();
        FitReport {
            metric: fit.metric.clone(),
            terms,
            r2: fit.r2,
            f: fit.f_stat.is_finite().then_some(fit.f_stat),
            n: fit.n,
            clusters: fit.n_clusters,
            dropped: fit.dropped.clone(),
        }
    }

    pub fn term(&self, name: &str) -> Option<&FitTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Write one `fit_<metric>.json` per metric; returns the paths written.
pub fn write_fit_reports(
    fits: &BTreeMap<String, FitResult>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let mut paths = Vec::new();
    for metric in METRIC_NAMES {
        let fit = fits
            .get(metric)
            .ok_or_else(|| AuditError::input(format!("no fit for metric {metric}")))?;
        let report = FitReport::from_fit(fit);
        let path = dir.join(format!("fit_{metric}.json"));
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| AuditError::input(format!("cannot serialize fit report: {e}")))?;
        fs::write(&path, json).map_err(|e| AuditError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_fit_report(path: &Path) -> Result<FitReport> {
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AuditError::schema(path, e.to_string()))
}

/// Flat coefficient table for plotting: one row per (metric, term).
pub fn write_fits_csv(fits: &BTreeMap<String, FitResult>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["metric", "term", "coef", "clustered_se", "classical_se"])
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for metric in METRIC_NAMES {
        let Some(fit) = fits.get(metric) else { continue };
        for column in &fit.columns {
            writer
                .write_record([
                    metric,
                    column,
                    &fit.coefficients[column].to_string(),
                    &fit.clustered_se[column].to_string(),
                    &fit.classical_se[column].to_string(),
                ])
                .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
        }
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

/// Fit-statistic summary rows (one per metric) for the report.
pub fn fit_stats_rows(fits: &BTreeMap<String, FitResult>) -> Vec<(String, f64, f64, usize, usize)> {
    METRIC_NAMES
        .iter()
        .filter_map(|m| fits.get(*m))
        .map(|f| (f.metric.clone(), f.r2, f.f_stat, f.n, f.n_clusters))
        .collect()
}
