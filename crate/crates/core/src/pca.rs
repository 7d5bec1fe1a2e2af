//! Principal-component analysis of the six-metric covariance structure.
//!
//! Correlation-matrix PCA: each metric column is z-scored over all
//! (utterance, model) rows, the 6x6 correlation matrix is eigendecomposed
//! symmetrically, eigenpairs are sorted by descending eigenvalue and each
//! loading column's sign is fixed so its largest-magnitude entry is
//! positive.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{AuditError, Result};
use crate::features::ColumnStats;
use crate::ingest::ScoreTable;
use crate::metrics::METRIC_NAMES;

/// Loadings and explained-variance ratios of the metric PCA.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// 6x6; rows follow `METRIC_NAMES`, columns are components.
    pub loadings: DMatrix<f64>,
    /// Non-increasing, sums to 1.
    pub explained_variance_ratio: Vec<f64>,
    /// Per-metric standardization stats, in `METRIC_NAMES` order.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl PcaResult {
    pub fn n_metrics(&self) -> usize {
        self.loadings.nrows()
    }
}

fn standardized_matrix(scores: &ScoreTable) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let n = scores.rows.len();
    let k = METRIC_NAMES.len();
    let mut z = DMatrix::zeros(n, k);
    let mut means = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    for (j, metric) in METRIC_NAMES.iter().enumerate() {
        let column = scores.metric_values(metric)?;
        let stats = ColumnStats::from_column(metric, &column)?;
        for (i, v) in column.iter().enumerate() {
            z[(i, j)] = stats.apply(*v);
        }
        means.push(stats.mean);
        stds.push(stats.std);
    }
    Ok((z, means, stds))
}

/// Run the PCA over a score table (needs more rows than metrics).
pub fn pca_metrics(scores: &ScoreTable) -> Result<PcaResult> {
    let n = scores.rows.len();
    let k = METRIC_NAMES.len();
    if n < k + 1 {
        return Err(AuditError::numerical(format!(
            "PCA needs at least {} rows, got {n}",
            k + 1
        )));
    }
    let (z, means, stds) = standardized_matrix(scores)?;

    // Correlation matrix of the z-scored columns; unit diagonal by
    // construction, set exactly to absorb rounding.
    let mut corr = z.transpose() * &z / n as f64;
    for j in 0..k {
        corr[(j, j)] = 1.0;
    }

    let eigen = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(AuditError::numerical("degenerate correlation matrix"));
    }
    let explained_variance_ratio: Vec<f64> = eigenvalues.iter().map(|l| l / total).collect();

    let mut loadings = DMatrix::zeros(k, k);
    for (new_col, &old_col) in order.iter().enumerate() {
        let column = eigen.eigenvectors.column(old_col);
        // Sign convention: largest-magnitude entry positive.
        let mut max_idx = 0;
        for i in 1..k {
            if column[i].abs() > column[max_idx].abs() {
                max_idx = i;
            }
        }
        let sign = if column[max_idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            loadings[(i, new_col)] = sign * column[i];
        }
    }

    Ok(PcaResult { loadings, explained_variance_ratio, means, stds })
}

/// Project score rows onto the first `n_components` loading columns.
pub fn project(scores: &ScoreTable, result: &PcaResult, n_components: usize) -> Result<DMatrix<f64>> {
    let k = result.n_metrics();
    if n_components == 0 || n_components > k {
        return Err(AuditError::input(format!(
            "n_components must be in 1..={k}, got {n_components}"
        )));
    }
    let n = scores.rows.len();
    let mut z = DMatrix::zeros(n, k);
    for (j, metric) in METRIC_NAMES.iter().enumerate() {
        let column = scores.metric_values(metric)?;
        for (i, v) in column.iter().enumerate() {
            z[(i, j)] = (v - result.means[j]) / result.stds[j];
        }
    }
    Ok(z * result.loadings.columns(0, n_components))
}

/// Write the loading matrix (metric x component) as CSV.
pub fn write_loadings_csv(result: &PcaResult, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header = vec!["metric".to_string()];
    for c in 1..=result.n_metrics() {
        header.push(format!("pc{c}"));
    }
    writer
        .write_record(&header)
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for (i, metric) in METRIC_NAMES.iter().enumerate() {
        let mut row = vec![metric.to_string()];
        for j in 0..result.n_metrics() {
            row.push(result.loadings[(i, j)].to_string());
        }
        writer
            .write_record(&row)
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

/// Write explained-variance ratios as CSV.
pub fn write_variance_csv(result: &PcaResult, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["component", "explained_variance_ratio"])
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for (i, r) in result.explained_variance_ratio.iter().enumerate() {
        writer
            .write_record([format!("pc{}", i + 1), r.to_string()])
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}

/// Deterministic loading biplot: metrics as labeled arrows in the PC1/PC2
/// plane, titled with the top-three explained-variance percentages.
pub fn render_loadings_svg(result: &PcaResult) -> String {
    let (width, height) = (520.0, 520.0);
    let (cx, cy) = (width / 2.0, height / 2.0 + 14.0);
    let scale = 190.0;
    let pct = |i: usize| result.explained_variance_ratio[i] * 100.0;
    let mut svg = String::with_capacity(4096);
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\">\n"
    );
    let _ = write!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">metric loadings: \
         PC1 {:.1}% / PC2 {:.1}% / PC3 {:.1}% (top-3 {:.1}%)</text>\n",
        cx,
        pct(0),
        pct(1),
        pct(2),
        pct(0) + pct(1) + pct(2)
    );
    // Unit circle and axes.
    let _ = write!(
        svg,
        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{scale:.2}\" fill=\"none\" stroke=\"#cccccc\"/>\n"
    );
    let _ = write!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{cy:.2}\" x2=\"{:.2}\" y2=\"{cy:.2}\" stroke=\"#dddddd\"/>\n",
        cx - scale,
        cx + scale
    );
    let _ = write!(
        svg,
        "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n",
        cy - scale,
        cy + scale
    );
    for (i, metric) in METRIC_NAMES.iter().enumerate() {
        let x = cx + result.loadings[(i, 0)] * scale;
        let y = cy - result.loadings[(i, 1)] * scale;
        let _ = write!(
            svg,
            "<line x1=\"{cx:.2}\" y1=\"{cy:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n"
        );
        let _ = write!(
            svg,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n"
        );
        let anchor = if result.loadings[(i, 0)] < 0.0 { "end" } else { "start" };
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"{anchor}\">{metric}</text>\n",
            x + if result.loadings[(i, 0)] < 0.0 { -6.0 } else { 6.0 },
            y - 4.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">PC1</text>\n",
        cx + scale - 14.0,
        cy + 14.0
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">PC2</text>\n",
        cx + 16.0,
        cy - scale + 12.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Write the loading figure to disk.
pub fn emit_loadings_figure(result: &PcaResult, path: &Path) -> Result<()> {
    std::fs::write(path, render_loadings_svg(result)).map_err(|e| AuditError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ScoreRow;
    use crate::metrics::{MetricFlags, MetricVector};

    fn table_from_columns(columns: [Vec<f64>; 6]) -> ScoreTable {
        let n = columns[0].len();
        let rows = (0..n)
            .map(|i| ScoreRow {
                sample_id: format!("u{i}"),
                model_id: "m1".into(),
                metrics: MetricVector {
                    wer: columns[0][i],
                    cer: columns[1][i],
                    mer: columns[2][i],
                    wil: columns[3][i],
                    ember: columns[4][i],
                    semdist: columns[5][i],
                    flags: MetricFlags::default(),
                },
            })
            .collect();
        ScoreTable { rows }
    }

    fn pseudo_column(n: usize, seed: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (((i * 2654435761 + seed * 97) % 10007) as f64 / 10007.0) - 0.5)
            .collect()
    }

    #[test]
    fn identical_columns_are_rank_one() {
        let base = pseudo_column(64, 1);
        let result = table_from_columns([
            base.clone(),
            base.clone(),
            base.clone(),
            base.clone(),
            base.clone(),
            base,
        ]);
        let pca = pca_metrics(&result).unwrap();
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        for r in &pca.explained_variance_ratio[1..] {
            assert!(r.abs() < 1e-9);
        }
        let expected = 1.0 / 6.0f64.sqrt();
        for i in 0..6 {
            assert!((pca.loadings[(i, 0)] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn loadings_are_orthonormal() {
        let table = table_from_columns([
            pseudo_column(200, 1),
            pseudo_column(200, 2),
            pseudo_column(200, 3),
            pseudo_column(200, 4),
            pseudo_column(200, 5),
            pseudo_column(200, 6),
        ]);
        let pca = pca_metrics(&table).unwrap();
        let gram = pca.loadings.transpose() * &pca.loadings;
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-8, "gram[{i},{j}]");
            }
        }
        let sum: f64 = pca.explained_variance_ratio.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(pca
            .explained_variance_ratio
            .windows(2)
            .all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn full_projection_reconstructs_standardized_data() {
        let table = table_from_columns([
            pseudo_column(50, 11),
            pseudo_column(50, 12),
            pseudo_column(50, 13),
            pseudo_column(50, 14),
            pseudo_column(50, 15),
            pseudo_column(50, 16),
        ]);
        let pca = pca_metrics(&table).unwrap();
        let projected = project(&table, &pca, 6).unwrap();
        let reconstructed = &projected * pca.loadings.transpose();
        let (z, _, _) = standardized_matrix(&table).unwrap();
        for i in 0..50 {
            for j in 0..6 {
                assert!((reconstructed[(i, j)] - z[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn projecting_column_means_lands_at_origin() {
        let table = table_from_columns([
            pseudo_column(50, 21),
            pseudo_column(50, 22),
            pseudo_column(50, 23),
            pseudo_column(50, 24),
            pseudo_column(50, 25),
            pseudo_column(50, 26),
        ]);
        let pca = pca_metrics(&table).unwrap();
        let mean_table = table_from_columns([
            vec![pca.means[0]; 7],
            vec![pca.means[1]; 7],
            vec![pca.means[2]; 7],
            vec![pca.means[3]; 7],
            vec![pca.means[4]; 7],
            vec![pca.means[5]; 7],
        ]);
        let projected = project(&mean_table, &pca, 3).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                assert!(projected[(i, j)].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn top_three_projection_variance_matches_ratios() {
        let table = table_from_columns([
            pseudo_column(300, 31),
            pseudo_column(300, 32),
            pseudo_column(300, 33),
            pseudo_column(300, 34),
            pseudo_column(300, 35),
            pseudo_column(300, 36),
        ]);
        let pca = pca_metrics(&table).unwrap();
        let projected = project(&table, &pca, 3).unwrap();
        let n = projected.nrows() as f64;
        let mut total = 0.0;
        for j in 0..3 {
            let col = projected.column(j);
            let mean = col.iter().sum::<f64>() / n;
            total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        }
        let expected: f64 = pca.explained_variance_ratio[..3].iter().sum::<f64>() * 6.0;
        assert!((total - expected).abs() < 1e-8, "{total} vs {expected}");
    }

    #[test]
    fn row_permutation_and_duplication_leave_result_unchanged() {
        let table = table_from_columns([
            pseudo_column(60, 41),
            pseudo_column(60, 42),
            pseudo_column(60, 43),
            pseudo_column(60, 44),
            pseudo_column(60, 45),
            pseudo_column(60, 46),
        ]);
        let pca = pca_metrics(&table).unwrap();

        let mut reversed_rows = table.rows.clone();
        reversed_rows.reverse();
        let pca_rev = pca_metrics(&ScoreTable { rows: reversed_rows }).unwrap();
        for (a, b) in pca
            .explained_variance_ratio
            .iter()
            .zip(&pca_rev.explained_variance_ratio)
        {
            assert!((a - b).abs() < 1e-10);
        }

        let mut doubled = table.rows.clone();
        doubled.extend(table.rows.iter().cloned());
        let pca_dup = pca_metrics(&ScoreTable { rows: doubled }).unwrap();
        for (a, b) in pca
            .explained_variance_ratio
            .iter()
            .zip(&pca_dup.explained_variance_ratio)
        {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_rescaling_of_a_raw_column_changes_nothing() {
        // Two-factor structure with well-separated eigenvalues so tiny
        // rounding differences cannot reorder components or flip signs.
        let n = 400;
        let f1 = pseudo_column(n, 51);
        let f2 = pseudo_column(n, 52);
        let noise: Vec<Vec<f64>> = (0..6).map(|s| pseudo_column(n, 60 + s)).collect();
        let weights = [(1.0, 0.0), (0.9, 0.0), (0.8, 0.0), (0.7, 0.0), (0.0, 1.0), (0.0, 0.85)];
        let make = |scale: f64, shift: f64| -> [Vec<f64>; 6] {
            std::array::from_fn(|j| {
                (0..n)
                    .map(|i| {
                        let raw = weights[j].0 * f1[i] + weights[j].1 * f2[i] + 0.2 * noise[j][i];
                        if j == 2 { scale * raw + shift } else { raw }
                    })
                    .collect()
            })
        };
        let a = pca_metrics(&table_from_columns(make(1.0, 0.0))).unwrap();
        let b = pca_metrics(&table_from_columns(make(100.0, 7.0))).unwrap();
        for (x, y) in a
            .explained_variance_ratio
            .iter()
            .zip(&b.explained_variance_ratio)
        {
            assert!((x - y).abs() < 1e-9);
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!(
                    (a.loadings[(i, j)] - b.loadings[(i, j)]).abs() < 1e-7,
                    "loading [{i},{j}]: {} vs {}",
                    a.loadings[(i, j)],
                    b.loadings[(i, j)]
                );
            }
        }
    }

    #[test]
    fn constant_column_is_rejected() {
        let table = table_from_columns([
            pseudo_column(20, 61),
            vec![0.25; 20],
            pseudo_column(20, 63),
            pseudo_column(20, 64),
            pseudo_column(20, 65),
            pseudo_column(20, 66),
        ]);
        let err = pca_metrics(&table).unwrap_err();
        assert!(err.to_string().contains("cer"), "{err}");
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let table = table_from_columns([
            pseudo_column(6, 71),
            pseudo_column(6, 72),
            pseudo_column(6, 73),
            pseudo_column(6, 74),
            pseudo_column(6, 75),
            pseudo_column(6, 76),
        ]);
        assert!(pca_metrics(&table).is_err());
    }

    #[test]
    fn figure_lists_metrics_and_percentages() {
        let table = table_from_columns([
            pseudo_column(40, 81),
            pseudo_column(40, 82),
            pseudo_column(40, 83),
            pseudo_column(40, 84),
            pseudo_column(40, 85),
            pseudo_column(40, 86),
        ]);
        let pca = pca_metrics(&table).unwrap();
        let svg = render_loadings_svg(&pca);
        for metric in METRIC_NAMES {
            assert_eq!(svg.matches(&format!(">{metric}</text>")).count(), 1, "{metric}");
        }
        assert_eq!(svg, render_loadings_svg(&pca), "byte identical");
        // Printed percentages sum to the printed top-3 total within rounding.
        let top3: f64 = pca.explained_variance_ratio[..3].iter().sum::<f64>() * 100.0;
        assert!(svg.contains(&format!("top-3 {top3:.1}%")));
    }
}
