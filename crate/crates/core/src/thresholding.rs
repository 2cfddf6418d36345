//! Global threshold limiting the false-positive rate on controls.
//!
//! Given pooled control values v (M = d·N₀ of them), τ is the smallest t
//! with `#{v > t} / M ≤ l_fpr`. The count is a step function of t, so the
//! minimum sits at an order statistic and sorting finds it exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierSpec;
use crate::error::{check_dim, Result, RsmError};
use crate::estimation::{complement, stratified_folds};
use crate::graph::NeighborhoodGraph;
use crate::pipeline::TrainedRsm;
use crate::reconstruct::RsmConfig;
use crate::seed;
use crate::types::{BinaryEffectMap, Dataset, EffectMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    pub l_fpr: f64,
    pub n_control_maps: usize,
}

fn check_l_fpr(l_fpr: f64) -> Result<()> {
    if l_fpr > 0.0 && l_fpr < 1.0 {
        Ok(())
    } else {
        Err(RsmError::Config(format!("l_fpr must lie in (0,1), got {l_fpr}")))
    }
}

/// Largest k with k/M ≤ l_fpr.
pub fn allowed_exceedances(m: usize, l_fpr: f64) -> usize {
    let mf = m as f64;
    let mut k = (l_fpr * mf).floor().max(0.0) as usize;
    while k > 0 && k as f64 / mf > l_fpr {
        k -= 1;
    }
    while k < m && (k + 1) as f64 / mf <= l_fpr {
        k += 1;
    }
    k
}

/// Fraction of `values` strictly above `t`.
pub fn exceedance_rate(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|&&v| v > t).count() as f64 / values.len() as f64
}

/// Exact τ over a pool of values.
pub fn threshold_from_values(values: &[f64], l_fpr: f64) -> Result<f64> {
    check_l_fpr(l_fpr)?;
    if values.is_empty() {
        return Err(RsmError::Data("no control values to threshold".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RsmError::Data("control values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = allowed_exceedances(sorted.len(), l_fpr);
    Ok(sorted[sorted.len() - 1 - k])
}

pub fn compute_threshold(control_maps: &[EffectMap], l_fpr: f64) -> Result<Threshold> {
    let first = control_maps
        .first()
        .ok_or_else(|| RsmError::Data("no control maps to threshold".into()))?;
    let mut pooled = Vec::with_capacity(first.len() * control_maps.len());
    for m in control_maps {
        check_dim(first.len(), m.len())?;
        pooled.extend_from_slice(&m.values);
    }
    Ok(Threshold {
        tau: threshold_from_values(&pooled, l_fpr)?,
        l_fpr,
        n_control_maps: control_maps.len(),
    })
}

/// Golden-section bracketing of the feasibility boundary. The returned
/// value is feasible and lies within `tol` of the exact τ, which places it
/// between τ and the next larger pooled value when `tol` is below the gap.
pub fn golden_section_threshold(values: &[f64], l_fpr: f64, tol: f64) -> Result<f64> {
    check_l_fpr(l_fpr)?;
    if values.is_empty() {
        return Err(RsmError::Data("no control values to threshold".into()));
    }
    let lo0 = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feasible = |t: f64| exceedance_rate(values, t) <= l_fpr;
    if feasible(lo0) {
        return Ok(lo0);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..500 {
        if hi - lo <= tol {
            break;
        }
        let t = hi - inv_phi * (hi - lo);
        if feasible(t) {
            hi = t;
        } else {
            lo = t;
        }
    }
    Ok(hi)
}

/// `q_j = 1[ρ_j > τ]`.
pub fn threshold_map(map: &EffectMap, tau: f64) -> BinaryEffectMap {
    BinaryEffectMap::new(map.values.iter().map(|&v| v > tau).collect())
}

/// τ by k-fold cross-validation on `subset`: each fold's held-out controls
/// are reconstructed by a model fit on the remaining samples, and the pooled
/// control maps are thresholded. Fold `f` uses seed
/// `derive(config.seed, [THRESHOLD, f])`.
pub fn cv_threshold_on(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    subset: &[usize],
    graph: &NeighborhoodGraph,
    config: &RsmConfig,
) -> Result<Threshold> {
    config.validate()?;
    let (controls, _) = dataset.split_by_label(subset);
    if controls.len() < config.folds {
        return Err(RsmError::Config(format!(
            "need at least {} controls for {}-fold thresholding, got {}",
            config.folds,
            config.folds,
            controls.len()
        )));
    }
    let folds = stratified_folds(
        dataset,
        subset,
        config.folds,
        seed::derive(config.seed, &[seed::tag::THRESHOLD]),
    )?;
    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let train = complement(subset, held);
            let inner = RsmConfig {
                seed: seed::derive(config.seed, &[seed::tag::THRESHOLD, f as u64]),
                ..config.clone()
            };
            let model = TrainedRsm::fit(spec, dataset, &train, graph, &inner)?;
            held.iter()
                .filter(|&&i| !dataset.label(i).is_case())
                .map(|&i| model.reconstruct(dataset.sample(i), graph))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    compute_threshold(&per_fold.concat(), config.l_fpr)
}

pub fn cv_threshold(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    graph: &NeighborhoodGraph,
    config: &RsmConfig,
) -> Result<Threshold> {
    cv_threshold_on(spec, dataset, &dataset.all_indices(), graph, config)
}
