//! Cross-model evaluation dynamics: per-sample mean error against
//! inter-model disagreement, quadrant classification and the rank
//! correlation that validates the difficulty index against them.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::features::FeatureVector;
use crate::ingest::ScoreTable;
use crate::sdi::SdiScore;
use crate::svg::{render_scatter, ScatterSpec, RAMP10};

/// Region of the (mu, sigma) plane relative to the corpus medians.
///
/// easy: low error, models agree. ambiguous: models disagree, error low.
/// hard: high error with high disagreement. hard_consensus: high error,
/// models agree it is hard. In reports the high-sigma cells (ambiguous,
/// hard) sit together; the label keeps them distinguishable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    Easy,
    Ambiguous,
    Hard,
    HardConsensus,
}

impl Quadrant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quadrant::Easy => "easy",
            Quadrant::Ambiguous => "ambiguous",
            Quadrant::Hard => "hard",
            Quadrant::HardConsensus => "hard_consensus",
        }
    }
}

/// One sample's coordinates on the cartography map.
#[derive(Debug, Clone, PartialEq)]
pub struct CartographyPoint {
    pub sample_id: String,
    pub metric: String,
    /// Mean error across the model ensemble.
    pub mu: f64,
    /// Population standard deviation across the ensemble.
    pub sigma: f64,
    /// 0 until difficulty scores are attached.
    pub sdi_decile: u8,
    pub quadrant: Quadrant,
    /// The sample's demographic levels, e.g. `sex:female`.
    pub group_tags: Vec<String>,
}

/// Compute (mu, sigma) per sample for one metric.
///
/// Every sample must be scored by the same model set of size >= 2; sigma
/// uses the population convention (divide by the ensemble size).
pub fn cartography(scores: &ScoreTable, metric: &str) -> Result<Vec<CartographyPoint>> {
    let models = scores.model_ids();
    if models.len() < 2 {
        return Err(AuditError::input(format!(
            "cartography needs at least 2 models, got {}",
            models.len()
        )));
    }
    let sample_ids = scores.sample_ids();
    let mut per_sample: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for row in &scores.rows {
        let slot = per_sample.entry(row.sample_id.as_str()).or_default();
        if slot.insert(row.model_id.as_str(), row.metrics.get(metric)).is_some() {
            return Err(AuditError::input(format!(
                "duplicate score for sample {:?}, model {:?}",
                row.sample_id, row.model_id
            )));
        }
    }

    let m = models.len() as f64;
    let mut points = Vec::with_capacity(sample_ids.len());
    for sample_id in &sample_ids {
        let by_model = &per_sample[sample_id.as_str()];
        let mut values = Vec::with_capacity(models.len());
        for model in &models {
            let v = by_model.get(model.as_str()).ok_or_else(|| {
                AuditError::input(format!("missing score for sample {sample_id:?}, model {model:?}"))
            })?;
            values.push(*v);
        }
        let mu = values.iter().sum::<f64>() / m;
        let all_equal = values.windows(2).all(|w| w[0] == w[1]);
        let sigma = if all_equal {
            0.0
        } else {
            (values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m).sqrt()
        };
        points.push(CartographyPoint {
            sample_id: sample_id.clone(),
            metric: metric.to_string(),
            mu,
            sigma,
            sdi_decile: 0,
            quadrant: Quadrant::Easy,
            group_tags: Vec::new(),
        });
    }
    Ok(points)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median-split quadrant classification.
///
/// Thresholds sit at the per-metric corpus medians of mu and sigma; a value
/// is "high" strictly above its median. Returns false when the split is
/// degenerate (all mu or all sigma equal), in which case labels are
/// unreliable.
pub fn classify_quadrants(points: &mut [CartographyPoint]) -> Result<bool> {
    if points.is_empty() {
        return Err(AuditError::input("no points to classify"));
    }
    let mut mus: Vec<f64> = points.iter().map(|p| p.mu).collect();
    let mut sigmas: Vec<f64> = points.iter().map(|p| p.sigma).collect();
    mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_mu = median(&mus);
    let med_sigma = median(&sigmas);
    let degenerate = mus[0] == mus[mus.len() - 1] || sigmas[0] == sigmas[sigmas.len() - 1];
    for p in points.iter_mut() {
        let high_mu = p.mu > med_mu;
        let high_sigma = p.sigma > med_sigma;
        p.quadrant = match (high_mu, high_sigma) {
            (false, false) => Quadrant::Easy,
            (false, true) => Quadrant::Ambiguous,
            (true, true) => Quadrant::Hard,
            (true, false) => Quadrant::HardConsensus,
        };
    }
    Ok(!degenerate)
}

/// Attach difficulty deciles (same metric) to the points.
pub fn attach_sdi(points: &mut [CartographyPoint], sdi_scores: &[SdiScore]) -> Result<()> {
    let by_id: BTreeMap<&str, u8> = sdi_scores
        .iter()
        .map(|s| (s.sample_id.as_str(), s.decile))
        .collect();
    for p in points.iter_mut() {
        let decile = by_id.get(p.sample_id.as_str()).ok_or_else(|| {
            AuditError::input(format!("no SDI score for sample {:?}", p.sample_id))
        })?;
        p.sdi_decile = *decile;
    }
    Ok(())
}

/// Attach `factor:level` tags from the feature table for stratified plots.
pub fn attach_group_tags(points: &mut [CartographyPoint], features: &[FeatureVector]) -> Result<()> {
    let by_id: BTreeMap<&str, &FeatureVector> =
        features.iter().map(|f| (f.sample_id.as_str(), f)).collect();
    for p in points.iter_mut() {
        let f = by_id.get(p.sample_id.as_str()).ok_or_else(|| {
            AuditError::input(format!("no feature row for sample {:?}", p.sample_id))
        })?;
        p.group_tags = vec![
            format!("sex:{}", f.sex.as_str()),
            format!("l1:{}", f.l1.as_str()),
            format!("typicality:{}", f.typicality.as_str()),
        ];
    }
    Ok(())
}

/// Per-decile (mu, sigma) means for the difficulty gradient table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecileRow {
    pub decile: u8,
    pub n: usize,
    pub mean_mu: f64,
    pub mean_sigma: f64,
}

/// Rank-correlation summary between difficulty and model behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdiCorrelation {
    pub metric: String,
    pub spearman_mu: f64,
    pub p_mu: f64,
    pub spearman_sigma: f64,
    pub p_sigma: f64,
    pub permutations: usize,
    pub seed: u64,
    pub deciles: Vec<DecileRow>,
}

/// Average ranks with ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Correlate difficulty scores with the cartography coordinates.
///
/// Spearman rho for (SDI, mu) and (SDI, sigma) with two-sided permutation
/// p-values from `permutations` seeded shuffles, plus the per-decile mean
/// table.
pub fn correlate_sdi(
    points: &[CartographyPoint],
    sdi_scores: &[SdiScore],
    permutations: usize,
    seed: u64,
) -> Result<SdiCorrelation> {
    if points.is_empty() {
        return Err(AuditError::input("no points to correlate"));
    }
    let by_id: BTreeMap<&str, &SdiScore> =
        sdi_scores.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut sdi = Vec::with_capacity(points.len());
    let mut mu = Vec::with_capacity(points.len());
    let mut sigma = Vec::with_capacity(points.len());
    let mut decile_acc: BTreeMap<u8, (usize, f64, f64)> = BTreeMap::new();
    for p in points {
        let s = by_id.get(p.sample_id.as_str()).ok_or_else(|| {
            AuditError::input(format!("no SDI score for sample {:?}", p.sample_id))
        })?;
        sdi.push(s.value);
        mu.push(p.mu);
        sigma.push(p.sigma);
        let entry = decile_acc.entry(s.decile).or_insert((0, 0.0, 0.0));
        entry.0 += 1;
        entry.1 += p.mu;
        entry.2 += p.sigma;
    }

    let sdi_ranks = ranks(&sdi);
    let mu_ranks = ranks(&mu);
    let sigma_ranks = ranks(&sigma);
    let rho_mu = pearson(&sdi_ranks, &mu_ranks);
    let rho_sigma = pearson(&sdi_ranks, &sigma_ranks);

    // Permutation test: shuffle the SDI ranks, re-evaluate both correlations
    // against the fixed coordinate ranks.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = sdi_ranks.clone();
    let mut hits_mu = 0usize;
    let mut hits_sigma = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if pearson(&shuffled, &mu_ranks).abs() >= rho_mu.abs() {
            hits_mu += 1;
        }
        if pearson(&shuffled, &sigma_ranks).abs() >= rho_sigma.abs() {
            hits_sigma += 1;
        }
    }
    let p_of = |hits: usize| (hits + 1) as f64 / (permutations + 1) as f64;

    let deciles = decile_acc
        .into_iter()
        .map(|(decile, (n, sum_mu, sum_sigma))| DecileRow {
            decile,
            n,
            mean_mu: sum_mu / n as f64,
            mean_sigma: sum_sigma / n as f64,
        })
        .collect();

    Ok(SdiCorrelation {
        metric: points[0].metric.clone(),
        spearman_mu: rho_mu,
        p_mu: p_of(hits_mu),
        spearman_sigma: rho_sigma,
        p_sigma: p_of(hits_sigma),
        permutations,
        seed,
        deciles,
    })
}

/// How to color a cartography plot.
pub enum ColorBy<'a> {
    /// Sequential 10-step ramp over difficulty deciles.
    SdiDecile,
    /// Highlight points carrying one tag against the rest.
    GroupTag(&'a str),
}

/// Render the scatter (sigma on x, mean error on y) as deterministic SVG.
pub fn render_cartography_svg(points: &[CartographyPoint], color_by: &ColorBy) -> Result<String> {
    if points.is_empty() {
        return Err(AuditError::input("cannot plot an empty point set"));
    }
    let metric = &points[0].metric;
    match color_by {
        ColorBy::SdiDecile => {
            let plot_points: Vec<(f64, f64, usize)> = points
                .iter()
                .map(|p| (p.sigma, p.mu, (p.sdi_decile.max(1) - 1) as usize))
                .collect();
            let legend: Vec<(usize, &str, String)> = (0..10)
                .map(|i| {
                    let label = match i {
                        0 => "decile 1 (easiest)".to_string(),
                        9 => "decile 10 (hardest)".to_string(),
                        _ => format!("decile {}", i + 1),
                    };
                    (i, RAMP10[i], label)
                })
                .collect();
            render_scatter(&ScatterSpec {
                title: &format!("{metric}: mean error vs inter-model disagreement"),
                x_label: "inter-model disagreement (sigma)",
                y_label: "mean error (mu)",
                points: &plot_points,
                legend: &legend,
            })
        }
        ColorBy::GroupTag(tag) => {
            let plot_points: Vec<(f64, f64, usize)> = points
                .iter()
                .map(|p| {
                    let hit = p.group_tags.iter().any(|t| t == tag);
                    (p.sigma, p.mu, usize::from(hit))
                })
                .collect();
            let legend: Vec<(usize, &str, String)> = vec![
                (1, "#d62728", tag.to_string()),
                (0, "#c7c7c7", "other".to_string()),
            ];
            render_scatter(&ScatterSpec {
                title: &format!("{metric}: cartography, {tag} highlighted"),
                x_label: "inter-model disagreement (sigma)",
                y_label: "mean error (mu)",
                points: &plot_points,
                legend: &legend,
            })
        }
    }
}

/// Write a cartography SVG to disk.
pub fn emit_cartography_svg(
    points: &[CartographyPoint],
    color_by: &ColorBy,
    path: &Path,
) -> Result<()> {
    let svg = render_cartography_svg(points, color_by)?;
    std::fs::write(path, svg).map_err(|e| AuditError::io(path, e))
}

/// Read a cartography CSV back (group tags are not persisted).
pub fn read_cartography_csv(path: &Path) -> Result<Vec<CartographyPoint>> {
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| AuditError::parse(path, 1, e.to_string()))?
        .clone();
    for expected in ["sample_id", "metric", "mu", "sigma", "quadrant", "sdi_decile"] {
        if !headers.iter().any(|h| h == expected) {
            return Err(AuditError::schema(path, format!("missing column {expected:?}")));
        }
    }
    let pos = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (i_id, i_metric, i_mu, i_sigma, i_quadrant, i_decile) = (
        pos("sample_id"),
        pos("metric"),
        pos("mu"),
        pos("sigma"),
        pos("quadrant"),
        pos("sdi_decile"),
    );
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AuditError::parse(path, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let quadrant = match get(i_quadrant) {
            "easy" => Quadrant::Easy,
            "ambiguous" => Quadrant::Ambiguous,
            "hard" => Quadrant::Hard,
            "hard_consensus" => Quadrant::HardConsensus,
            other => {
                return Err(AuditError::parse(path, line, format!("bad quadrant {other:?}")))
            }
        };
        points.push(CartographyPoint {
            sample_id: get(i_id).to_owned(),
            metric: get(i_metric).to_owned(),
            mu: get(i_mu)
                .parse()
                .map_err(|_| AuditError::parse(path, line, "non-numeric mu"))?,
            sigma: get(i_sigma)
                .parse()
                .map_err(|_| AuditError::parse(path, line, "non-numeric sigma"))?,
            sdi_decile: get(i_decile)
                .parse()
                .map_err(|_| AuditError::parse(path, line, "bad sdi_decile"))?,
            quadrant,
            group_tags: Vec::new(),
        });
    }
    Ok(points)
}

/// Append rows (sample_id, metric, mu, sigma, quadrant, sdi_decile) for all
/// metrics to one CSV.
pub fn write_cartography_csv(all_points: &[CartographyPoint], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["sample_id", "metric", "mu", "sigma", "quadrant", "sdi_decile"])
        .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    for p in all_points {
        writer
            .write_record([
                p.sample_id.as_str(),
                p.metric.as_str(),
                &p.mu.to_string(),
                &p.sigma.to_string(),
                p.quadrant.as_str(),
                &p.sdi_decile.to_string(),
            ])
            .map_err(|e| AuditError::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))?;
    Ok(())
}
