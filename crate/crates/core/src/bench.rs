//! Allocation-counted benchmarks of the two heads.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::c2f::{self, C2fConfig, C2fParams};
use crate::counter;
use crate::error::{Error, Result};
use crate::inference::{self, retained_count, PruneConfig};
use crate::matrix::Matrix;
use crate::s2e::S2eParams;
use crate::training::HeadKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    /// Document length in tokens.
    pub n: usize,
    /// Embedding width.
    pub d: usize,
    /// s2e head width d′.
    pub head_dim: usize,
    /// c2f feature width.
    pub feature_dim: usize,
    pub top_lambda: f64,
    pub max_span_len: usize,
    /// c2f antecedents per query; `None` keeps every preceding candidate (`k − 1`).
    pub max_antecedents: Option<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 512,
            d: 64,
            head_dim: 32,
            feature_dim: 4,
            top_lambda: 0.4,
            max_span_len: 30,
            max_antecedents: None,
            seed: 0,
        }
    }
}

impl BenchConfig {
    fn prune(&self) -> PruneConfig {
        PruneConfig {
            max_span_len: self.max_span_len,
            top_lambda: self.top_lambda,
        }
    }

    fn antecedents(&self) -> usize {
        self.max_antecedents
            .unwrap_or_else(|| retained_count(self.top_lambda, self.n).saturating_sub(1))
            .max(1)
    }

    fn inputs(&self) -> (Matrix, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let x = Matrix::uniform(self.n, self.d, 1.0, &mut rng);
        (x, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationReport {
    pub label: String,
    pub n: usize,
    /// Retained candidates.
    pub k: usize,
    pub peak_live_floats: usize,
    pub total_allocated_floats: usize,
    pub wall_time_seconds: f64,
    /// Process-wide resident-set high-water mark, where the platform reports one.
    pub peak_rss_kb: Option<u64>,
}

impl AllocationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Reads `VmHWM` from `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn report(label: &str, cfg: &BenchConfig, k: usize, stats: counter::AllocStats, start: Instant) -> AllocationReport {
    AllocationReport {
        label: label.to_string(),
        n: cfg.n,
        k,
        peak_live_floats: stats.peak_live,
        total_allocated_floats: stats.total_allocated,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        peak_rss_kb: peak_rss_kb(),
    }
}

/// Scores one random document with the s2e head. Inputs and parameters are
/// allocated outside the measured region.
pub fn measure_s2e(cfg: &BenchConfig) -> Result<AllocationReport> {
    let (x, mut rng) = cfg.inputs();
    let params = S2eParams::init_with(cfg.d, cfg.head_dim, &mut rng);
    let synthetic = vec![false; cfg.n];
    let start = Instant::now();
    let (scores, stats) = counter::measure(|| inference::score_document(&x, &synthetic, &params, &cfg.prune()));
    Ok(report("s2e", cfg, scores?.k(), stats, start))
}

/// Scores one random document with the c2f head.
pub fn measure_c2f(cfg: &BenchConfig) -> Result<AllocationReport> {
    let (x, mut rng) = cfg.inputs();
    let c2f_cfg = C2fConfig {
        feature_dim: cfg.feature_dim,
        ..C2fConfig::default()
    };
    let params = C2fParams::init_with(cfg.d, &c2f_cfg, &mut rng);
    let synthetic = vec![false; cfg.n];
    let speakers = vec![0; cfg.n];
    let start = Instant::now();
    let (scores, stats) = counter::measure(|| {
        c2f::score_document(
            &x,
            &synthetic,
            &speakers,
            crate::corpus::Genre(0),
            &params,
            &cfg.prune(),
            cfg.antecedents(),
        )
    });
    Ok(report("c2f", cfg, scores?.candidates.k(), stats, start))
}

pub fn measure_head(head: HeadKind, cfg: &BenchConfig) -> Result<AllocationReport> {
    match head {
        HeadKind::S2e => measure_s2e(cfg),
        HeadKind::C2f => measure_c2f(cfg),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Precondition("need at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::OutOfDomain("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::OutOfDomain("all document lengths are equal".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub head: String,
    pub points: Vec<AllocationReport>,
    /// Growth exponent of peak live floats in `n`.
    pub exponent: f64,
}

/// Measures `head` at each document length and fits the growth exponent.
pub fn scaling_sweep(head: HeadKind, base: &BenchConfig, lengths: &[usize]) -> Result<ScalingReport> {
    if lengths.len() < 3 {
        return Err(Error::Precondition(
            "a scaling sweep needs at least three lengths".into(),
        ));
    }
    let points = lengths
        .iter()
        .map(|&n| measure_head(head, &BenchConfig { n, ..*base }))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.peak_live_floats as f64).collect();
    Ok(ScalingReport {
        head: points[0].label.clone(),
        exponent: log_log_slope(&xs, &ys)?,
        points,
    })
}

/// Multiplier in the s2e peak budget: the k×k score matrix and its four
/// factor products are live together.
pub const S2E_PEAK_CONSTANT: usize = 5;

/// `C1·(k² + n·d′ + n·ℓ)`, an upper bound on the s2e peak live floats.
pub fn s2e_peak_budget(cfg: &BenchConfig) -> usize {
    let k = retained_count(cfg.top_lambda, cfg.n);
    S2E_PEAK_CONSTANT * (k * k + cfg.n * cfg.head_dim + cfg.n * cfg.max_span_len)
}

/// `k·K·(3·(3d + d_f) + 3·d_f)`: floats in the c2f pair buffer alone.
pub fn c2f_pair_buffer_floats(cfg: &BenchConfig) -> usize {
    let k = retained_count(cfg.top_lambda, cfg.n);
    c2f::pair_buffer_floats(k, cfg.antecedents(), cfg.d, cfg.feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
        assert!(log_log_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn small_runs() {
        let cfg = BenchConfig {
            n: 48,
            d: 8,
            head_dim: 4,
            max_span_len: 5,
            ..BenchConfig::default()
        };
        let s2e = measure_s2e(&cfg).unwrap();
        let c2f = measure_c2f(&cfg).unwrap();
        assert_eq!(s2e.k, 19);
        assert!(s2e.peak_live_floats > 0);
        assert!(c2f.peak_live_floats >= c2f_pair_buffer_floats(&cfg));
        assert!(s2e.to_json().contains("\"label\":\"s2e\""));
    }
}
