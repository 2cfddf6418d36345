//! Detection metrics and the cross-validated experiment harness.

mod experiment;

use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Result, RsmError};
use crate::seed;
use crate::types::BinaryEffectMap;

pub use experiment::{
    run_experiment, run_experiment_on, ExperimentConfig, ExperimentInput, ExperimentReport,
    FoldRecord, Method, SummaryRow,
};

/// Dice coefficient `2|q∩t| / (|q|+|t|)`; 1 when both maps are empty.
pub fn dsc(q: &BinaryEffectMap, truth: &BinaryEffectMap) -> Result<f64> {
    check_dim(truth.len(), q.len())?;
    let both = q
        .detections
        .iter()
        .zip(&truth.detections)
        .filter(|(a, b)| **a && **b)
        .count();
    let total = q.count() + truth.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    })
}

/// Fraction of sites flagged, for a map whose truth is all-negative.
pub fn fpr(q: &BinaryEffectMap) -> f64 {
    if q.is_empty() {
        0.0
    } else {
        q.count() as f64 / q.len() as f64
    }
}

/// Per-site count of maps with a detection; `d` sets the length when `maps`
/// is empty.
pub fn occurrence_map(maps: &[BinaryEffectMap], d: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; d];
    for m in maps {
        check_dim(d, m.len())?;
        for (c, &q) in counts.iter_mut().zip(&m.detections) {
            *c += usize::from(q);
        }
    }
    Ok(counts)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

/// Sample Pearson correlation.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    if x.len() < 3 {
        return Err(RsmError::Data("correlation needs at least 3 points".into()));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    if vx == 0.0 || vy == 0.0 {
        return Err(RsmError::Data("correlation undefined for zero variance".into()));
    }
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() as f64 - 1.0);
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Welch two-sample t statistic, positive when cases exceed controls.
pub fn group_t_stat(cases: &[f64], controls: &[f64]) -> Result<f64> {
    if cases.len() < 2 || controls.len() < 2 {
        return Err(RsmError::Data("t statistic needs at least 2 values per group".into()));
    }
    let (m1, v1) = mean_var(cases);
    let (m0, v0) = mean_var(controls);
    let se2 = v1 / cases.len() as f64 + v0 / controls.len() as f64;
    if se2 == 0.0 {
        return Err(RsmError::Data("t statistic undefined for zero variance".into()));
    }
    Ok((m1 - m0) / se2.sqrt())
}

/// Stand-in for a clinical covariate: the true affected-area size of each
/// subject plus Gaussian noise of the given standard deviation.
pub fn synthetic_auxiliary_marker(true_sizes: &[f64], noise_sd: f64, seed: u64) -> Result<Vec<f64>> {
    if noise_sd == 0.0 {
        return Ok(true_sizes.to_vec());
    }
    let normal = Normal::new(0.0, noise_sd)
        .map_err(|e| RsmError::Config(format!("invalid marker noise: {e}")))?;
    let mut rng = seed::rng(seed);
    Ok(true_sizes.iter().map(|s| s + normal.sample(&mut rng)).collect())
}
