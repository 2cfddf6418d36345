//! Comparison methods: raw single-model maps (NBS), bootstrap-average maps
//! (WBS) and a per-site normative model for outlier detection.

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierSpec;
use crate::error::{check_dim, Result, RsmError};
use crate::estimation::estimate_noise_and_mean;
use crate::types::{Dataset, EffectMap, MapRole, Sample};

/// Relative std floor, scaled by the pooled control std.
pub const NORMATIVE_STD_FLOOR_REL: f64 = 1e-6;

/// Per-site Gaussian fit to controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormativeModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormativeModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Population mean and std over the controls in `subset`; cases are ignored.
pub fn fit_normative(dataset: &Dataset, subset: &[usize]) -> Result<NormativeModel> {
    let (controls, _) = dataset.split_by_label(subset);
    if controls.len() < 2 {
        return Err(RsmError::Training(format!(
            "normative model needs at least 2 controls, got {}",
            controls.len()
        )));
    }
    let d = dataset.dim();
    let n = controls.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in &controls {
        for (m, x) in mean.iter_mut().zip(&dataset.sample(i).measurements) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in &controls {
        for ((v, x), m) in var.iter_mut().zip(&dataset.sample(i).measurements).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let pooled = (var.iter().sum::<f64>() / d as f64).sqrt();
    let floor = (NORMATIVE_STD_FLOOR_REL * pooled).max(1e-12);
    let std = var.iter().map(|v| v.sqrt().max(floor)).collect();
    Ok(NormativeModel { mean, std })
}

/// `|f_j − mean_j| / std_j`. Monotone in 1 − likelihood at each site, and
/// comparable across sites with different spread.
pub fn outlier_score_map(model: &NormativeModel, sample: &Sample) -> Result<EffectMap> {
    check_dim(model.dim(), sample.dim())?;
    Ok(EffectMap::new(
        sample
            .measurements
            .iter()
            .zip(&model.mean)
            .zip(&model.std)
            .map(|((x, m), s)| ((x - m) / s).abs())
            .collect(),
        MapRole::Raw,
    ))
}

/// Bootstrap-average map ρ̄ for `test_sample`.
pub fn wbs_map(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    test_sample: &Sample,
    n_bs: usize,
    seed: u64,
) -> Result<EffectMap> {
    Ok(estimate_noise_and_mean(spec, dataset, test_sample, n_bs, seed)?.mean_map)
}

/// Effect map of one classifier trained on the whole dataset.
pub fn nbs_map(spec: &ClassifierSpec, dataset: &Dataset, test_sample: &Sample) -> Result<EffectMap> {
    spec.fit_all(dataset)?.effect_map(test_sample)
}
