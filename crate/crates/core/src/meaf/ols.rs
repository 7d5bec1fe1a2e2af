//! Least-squares fitting with speaker-clustered standard errors.
//!
//! The solve goes through a QR factorization rather than normal equations;
//! clustered covariance uses the CR1 sandwich with the standard
//! small-sample correction.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::error::{AuditError, Result};
use crate::features::ColumnStats;
use crate::meaf::design::{DesignMatrix, FactorInfo};

/// Coefficients, uncertainty and fit statistics for one metric's regression.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub metric: String,
    /// Column names in design order.
    pub columns: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    /// CR1 speaker-clustered standard errors.
    pub clustered_se: BTreeMap<String, f64>,
    /// Classical homoskedastic standard errors, for comparison.
    pub classical_se: BTreeMap<String, f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    /// Overall regression F: (R^2/(k-1)) / ((1-R^2)/(n-k)).
    pub f_stat: f64,
    pub n: usize,
    pub k: usize,
    pub n_clusters: usize,
    pub factors: Vec<FactorInfo>,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
    pub response_stats: ColumnStats,
}

impl FitResult {
    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.coefficients.get(column).copied()
    }
}

/// Fit one design by QR least squares and attach both SE flavors.
pub fn fit_ols(design: &DesignMatrix) -> Result<FitResult> {
    let n = design.x.nrows();
    let k = design.x.ncols();
    if n <= k {
        return Err(AuditError::numerical(format!(
            "cannot fit: n = {n} rows <= k = {k} columns"
        )));
    }

    let qr = design.x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &design.y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| AuditError::numerical("QR factor is singular; design not full rank"))?;

    let fitted = &design.x * &beta;
    let residuals = &design.y - &fitted;
    let ssr: f64 = residuals.iter().map(|u| u * u).sum();
    let ybar = design.y.iter().sum::<f64>() / n as f64;
    let sst: f64 = design.y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    if sst <= 0.0 {
        return Err(AuditError::numerical("constant response; nothing to fit"));
    }
    let r2 = 1.0 - ssr / sst;
    let f_stat = if k > 1 {
        let denom = (1.0 - r2) / (n - k) as f64;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            (r2 / (k - 1) as f64) / denom
        }
    } else {
        0.0
    };

    // (X'X)^-1 = R^-1 R^-T from the triangular factor.
    let identity = DMatrix::identity(k, k);
    let r_inv = r
        .solve_upper_triangular(&identity)
        .ok_or_else(|| AuditError::numerical("QR factor is singular; design not full rank"))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let sigma2 = ssr / (n - k) as f64;
    let classical: Vec<f64> = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt()).collect();

    let clustered = cluster_robust_se(design, &residuals, &xtx_inv)?;
    let n_clusters = {
        let mut ids: Vec<&str> = design.cluster_ids.iter().map(String::as_str).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };

    let to_map = |values: &[f64]| -> BTreeMap<String, f64> {
        design.columns.iter().cloned().zip(values.iter().copied()).collect()
    };

    Ok(FitResult {
        metric: design.metric.clone(),
        columns: design.columns.clone(),
        coefficients: to_map(beta.as_slice()),
        clustered_se: to_map(&clustered),
        classical_se: to_map(&classical),
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
        r2,
        f_stat,
        n,
        k,
        n_clusters,
        factors: design.factors.clone(),
        dropped: design.dropped.clone(),
        warnings: design.warnings.clone(),
        response_stats: design.response_stats,
    })
}

/// CR1 sandwich estimator over speaker clusters:
/// V = c (X'X)^-1 (sum_g X_g' u_g u_g' X_g) (X'X)^-1,
/// c = [G/(G-1)] [(n-1)/(n-k)].
pub fn cluster_robust_se(
    design: &DesignMatrix,
    residuals: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = design.x.nrows();
    let k = design.x.ncols();

    // BTreeMap keeps the accumulation order fixed, so sums are reproducible.
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in design.cluster_ids.iter().enumerate() {
        groups.entry(id.as_str()).or_default().push(i);
    }
    let g = groups.len();
    if g < 2 {
        return Err(AuditError::numerical(format!(
            "clustered standard errors need at least 2 clusters, got {g}"
        )));
    }

    let mut meat = DMatrix::zeros(k, k);
    let mut score = vec![0.0; k];
    for rows in groups.values() {
        score.iter_mut().for_each(|s| *s = 0.0);
        for &i in rows {
            let u = residuals[i];
            for j in 0..k {
                score[j] += design.x[(i, j)] * u;
            }
        }
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += score[a] * score[b];
            }
        }
    }

    let correction = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let v = xtx_inv * meat * xtx_inv * correction;
    Ok((0..k).map(|j| v[(j, j)].max(0.0).sqrt()).collect())
}
