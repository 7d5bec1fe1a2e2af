//! Blind SNR estimation from the waveform amplitude distribution.
//!
//! The estimator computes the amplitude-gap statistic
//! `g = ln(mean(|x|)) - mean(ln(|x|))` over non-zero samples, then inverts a
//! precomputed monotone table mapping SNR to the expected statistic for
//! Gamma-distributed speech amplitudes (shape 0.4) mixed with Gaussian
//! noise. The table is generated once by seeded Monte Carlo over
//! SNR in {-20, ..., 100} dB in 1 dB steps and shipped as a data file;
//! estimates clamp to that range.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{AuditError, Result};

/// Gamma shape parameter of the speech amplitude model.
pub const SPEECH_GAMMA_SHAPE: f64 = 0.4;
/// Table range in dB.
pub const SNR_MIN_DB: f64 = -20.0;
pub const SNR_MAX_DB: f64 = 100.0;

const BUNDLED_TABLE: &str = include_str!("../../data/wada_table.csv");

/// Monotone SNR -> expected-statistic lookup table.
#[derive(Debug, Clone)]
pub struct WadaTable {
    snr_db: Vec<f64>,
    expected_g: Vec<f64>,
}

impl WadaTable {
    /// The table shipped with the crate.
    pub fn bundled() -> &'static WadaTable {
        static TABLE: OnceLock<WadaTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            WadaTable::from_csv_str(BUNDLED_TABLE).expect("bundled WADA table is valid")
        })
    }

    pub fn from_csv_path(path: &Path) -> Result<WadaTable> {
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        WadaTable::from_csv_str(&text)
    }

    /// Parse a `snr_db,expected_g` CSV (header line required).
    pub fn from_csv_str(text: &str) -> Result<WadaTable> {
        let mut snr_db = Vec::new();
        let mut expected_g = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let snr: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| AuditError::input(format!("bad WADA table line {}", idx + 1)))?;
            let g: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| AuditError::input(format!("bad WADA table line {}", idx + 1)))?;
            snr_db.push(snr);
            expected_g.push(g);
        }
        if snr_db.len() < 2 {
            return Err(AuditError::input("WADA table needs at least two rows"));
        }
        for w in snr_db.windows(2) {
            if w[1] <= w[0] {
                return Err(AuditError::input("WADA table SNR column must be increasing"));
            }
        }
        for w in expected_g.windows(2) {
            if w[1] < w[0] {
                return Err(AuditError::input("WADA table statistic column must be non-decreasing"));
            }
        }
        Ok(WadaTable { snr_db, expected_g })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("snr_db,expected_g\n");
        for (snr, g) in self.snr_db.iter().zip(&self.expected_g) {
            let _ = writeln!(out, "{snr},{g:.6}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| AuditError::io(path, e))
    }

    /// Regenerate the table by Monte Carlo.
    ///
    /// One shared draw stream feeds every SNR point (only the mixing ratio
    /// changes), which keeps the curve smooth in SNR; draws are processed
    /// in blocks so large sample counts need no large buffers.
    /// Pool-adjacent-violators then enforces monotonicity against residual
    /// sampling noise. The low-SNR end of the curve is nearly flat, so the
    /// bundled table uses a large sample count (64M per point).
    pub fn generate(samples_per_point: usize, seed: u64) -> WadaTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Gamma::new(SPEECH_GAMMA_SHAPE, unit_power_gamma_scale()).unwrap();

        let n_points = (SNR_MAX_DB - SNR_MIN_DB) as usize + 1;
        let snr_db: Vec<f64> = (0..n_points).map(|k| SNR_MIN_DB + k as f64).collect();
        let amplitudes: Vec<f64> = snr_db.iter().map(|s| 10f64.powf(s / 20.0)).collect();

        let mut sum_abs = vec![0.0f64; n_points];
        let mut sum_ln = vec![0.0f64; n_points];
        let mut counts = vec![0u64; n_points];

        const BLOCK: usize = 1 << 18;
        let mut speech = vec![0.0f64; BLOCK];
        let mut noise = vec![0.0f64; BLOCK];
        let mut remaining = samples_per_point;
        while remaining > 0 {
            let this_block = remaining.min(BLOCK);
            for i in 0..this_block {
                let magnitude: f64 = gamma.sample(&mut rng);
                speech[i] = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
                noise[i] =
                    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            }
            for k in 0..n_points {
                let a = amplitudes[k];
                let mut block_abs = 0.0;
                let mut block_ln = 0.0;
                let mut block_count = 0u64;
                for i in 0..this_block {
                    let z = (a * speech[i] + noise[i]).abs();
                    if z > 0.0 {
                        block_abs += z;
                        block_ln += z.ln();
                        block_count += 1;
                    }
                }
                sum_abs[k] += block_abs;
                sum_ln[k] += block_ln;
                counts[k] += block_count;
            }
            remaining -= this_block;
        }

        let mut expected_g: Vec<f64> = (0..n_points)
            .map(|k| {
                let n = counts[k] as f64;
                (sum_abs[k] / n).ln() - sum_ln[k] / n
            })
            .collect();
        pool_adjacent_violators(&mut expected_g);
        WadaTable { snr_db, expected_g }
    }

    /// Invert the statistic to an SNR estimate, clamped to the table range.
    pub fn invert(&self, g: f64) -> f64 {
        let gs = &self.expected_g;
        let n = gs.len();
        if g <= gs[0] {
            return self.snr_db[0];
        }
        if g >= gs[n - 1] {
            return self.snr_db[n - 1];
        }
        // First segment [i, i+1] with gs[i] <= g < gs[i+1].
        let mut i = 0;
        while i + 1 < n && gs[i + 1] <= g {
            i += 1;
        }
        let (g0, g1) = (gs[i], gs[i + 1]);
        let (s0, s1) = (self.snr_db[i], self.snr_db[i + 1]);
        if g1 == g0 {
            return 0.5 * (s0 + s1);
        }
        s0 + (g - g0) / (g1 - g0) * (s1 - s0)
    }

    pub fn len(&self) -> usize {
        self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty()
    }
}

/// Gamma scale giving unit signal power for the speech amplitude model:
/// E[X^2] = k(k+1) theta^2 with k = 0.4.
pub fn unit_power_gamma_scale() -> f64 {
    1.0 / (SPEECH_GAMMA_SHAPE * (SPEECH_GAMMA_SHAPE + 1.0)).sqrt()
}

fn pool_adjacent_violators(values: &mut [f64]) {
    // Isotonic regression with unit weights.
    let n = values.len();
    let mut level: Vec<f64> = values.to_vec();
    let mut weight: Vec<f64> = vec![1.0; n];
    let mut len = 0usize;
    for i in 0..n {
        level[len] = values[i];
        weight[len] = 1.0;
        len += 1;
        while len > 1 && level[len - 2] > level[len - 1] {
            let w = weight[len - 2] + weight[len - 1];
            let v = (level[len - 2] * weight[len - 2] + level[len - 1] * weight[len - 1]) / w;
            level[len - 2] = v;
            weight[len - 2] = w;
            len -= 1;
        }
    }
    let mut idx = 0;
    for block in 0..len {
        for _ in 0..weight[block] as usize {
            values[idx] = level[block];
            idx += 1;
        }
    }
}

/// The amplitude-gap statistic over non-zero samples.
pub fn amplitude_gap_statistic(samples: &[f64]) -> Result<f64> {
    let mut sum_abs = 0.0;
    let mut sum_ln = 0.0;
    let mut count = 0usize;
    for &x in samples {
        if !x.is_finite() {
            return Err(AuditError::input("non-finite audio sample"));
        }
        let a = x.abs();
        if a > 0.0 {
            sum_abs += a;
            sum_ln += a.ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(AuditError::UndefinedSnr("signal is all zeros".into()));
    }
    Ok((sum_abs / count as f64).ln() - sum_ln / count as f64)
}

/// Estimate the SNR of a mono clip in dB.
pub fn wada_snr(samples: &[f64], sample_rate: u32, table: &WadaTable) -> Result<f64> {
    if sample_rate == 0 {
        return Err(AuditError::input("zero sample rate"));
    }
    let duration = samples.len() as f64 / sample_rate as f64;
    if duration < 0.1 {
        return Err(AuditError::UndefinedSnr(format!(
            "signal too short ({duration:.3} s, need at least 0.1 s)"
        )));
    }
    let g = amplitude_gap_statistic(samples)?;
    Ok(table.invert(g))
}
