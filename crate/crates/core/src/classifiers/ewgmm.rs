use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RsmError};
use crate::probit::probit;
use crate::types::{Dataset, EffectMap, MapRole, Sample};

/// Posterior clamp applied before the probit transform.
pub const POSTERIOR_CLAMP: f64 = 1e-6;
/// Per-class std floor, relative to the measurement's pooled std.
pub const STD_FLOOR_REL: f64 = 1e-6;
const STD_FLOOR_ABS: f64 = 1e-12;

/// Independent two-Gaussian model at every measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwGmmModel {
    pub mu0: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub prior0: f64,
    pub prior1: f64,
}

struct Moments {
    n: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            n: 0.0,
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((s, q), &v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    fn mean(&self, j: usize) -> f64 {
        self.sum[j] / self.n
    }

    fn std(&self, j: usize) -> f64 {
        let m = self.mean(j);
        (self.sum_sq[j] / self.n - m * m).max(0.0).sqrt()
    }
}

impl EwGmmModel {
    /// Per-class sample means and population stds on the rows `indices`.
    pub fn fit(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        dataset.require_both_classes(indices)?;
        let d = dataset.dim();
        // Two-pass would be more accurate; shift by the first row instead.
        let shift = &dataset.sample(indices[0]).measurements;
        let mut class = [Moments::new(d), Moments::new(d)];
        let mut pooled = Moments::new(d);
        let mut centered = vec![0.0; d];
        for &i in indices {
            let s = dataset.sample(i);
            for ((c, &v), &o) in centered.iter_mut().zip(&s.measurements).zip(shift) {
                *c = v - o;
            }
            class[s.label.bit() as usize].add(&centered);
            pooled.add(&centered);
        }
        let mut model = EwGmmModel {
            mu0: vec![0.0; d],
            sigma0: vec![0.0; d],
            mu1: vec![0.0; d],
            sigma1: vec![0.0; d],
            prior0: class[0].n / indices.len() as f64,
            prior1: class[1].n / indices.len() as f64,
        };
        for j in 0..d {
            let floor = (STD_FLOOR_REL * pooled.std(j)).max(STD_FLOOR_ABS);
            model.mu0[j] = class[0].mean(j) + shift[j];
            model.mu1[j] = class[1].mean(j) + shift[j];
            model.sigma0[j] = class[0].std(j).max(floor);
            model.sigma1[j] = class[1].std(j).max(floor);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// p(y=1 | f_j) by Bayes' rule, evaluated in log space.
    pub fn posterior(&self, j: usize, f: f64) -> f64 {
        self.posterior_with(j, f, (self.prior0 / self.prior1).ln())
    }

    fn posterior_with(&self, j: usize, f: f64, log_prior_ratio: f64) -> f64 {
        let z0 = (f - self.mu0[j]) / self.sigma0[j];
        let z1 = (f - self.mu1[j]) / self.sigma1[j];
        // log p(f, y=0) - log p(f, y=1)
        let diff = 0.5 * (z1 * z1 - z0 * z0) + (self.sigma1[j] / self.sigma0[j]).ln() + log_prior_ratio;
        if diff.is_nan() {
            return self.prior1;
        }
        1.0 / (1.0 + diff.exp())
    }

    pub fn effect_values(&self, x: &[f64]) -> Vec<f64> {
        let lpr = (self.prior0 / self.prior1).ln();
        x.iter()
            .enumerate()
            .map(|(j, &f)| {
                probit(
                    self.posterior_with(j, f, lpr)
                        .clamp(POSTERIOR_CLAMP, 1.0 - POSTERIOR_CLAMP),
                )
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for v in [&self.sigma0, &self.mu1, &self.sigma1] {
            check_dim(d, v.len())?;
        }
        if self.sigma0.iter().chain(&self.sigma1).any(|&s| s.is_nan() || s <= 0.0) {
            return Err(RsmError::Data("ew-GMM stds must be positive".into()));
        }
        if (self.prior0 + self.prior1 - 1.0).abs() > 1e-9 {
            return Err(RsmError::Data("ew-GMM priors must sum to one".into()));
        }
        Ok(())
    }
}

pub fn train_ewgmm(dataset: &Dataset) -> Result<EwGmmModel> {
    EwGmmModel::fit(dataset, &dataset.all_indices())
}

/// Probit-transformed posterior map for one sample.
pub fn ewgmm_effect_map(model: &EwGmmModel, sample: &Sample) -> Result<EffectMap> {
    check_dim(model.dim(), sample.dim())?;
    Ok(EffectMap::new(
        model.effect_values(&sample.measurements),
        MapRole::Raw,
    ))
}
