//! Bootstrap estimation of per-sample observation noise and of the MRF
//! prior parameters.
//!
//! For a test sample, `N_bs` classifiers trained on stratified bootstrap
//! replicates give maps ρ̂⁽ʳ⁾; their population mean is ρ̄ and their
//! population variance is σ². The prior variances come from one
//! bootstrap-average map ρ̄⁽ⁿ⁾ per training sample: ϱ_j is the population
//! variance of ρ̄_j⁽ⁿ⁾ over n, ϱ_jk that of ρ̄_j⁽ⁿ⁾ − ρ̄_k⁽ⁿ⁾ on each edge.

mod resample;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use resample::{complement, stratified_bootstrap, stratified_bootstrap_of, stratified_folds};

use crate::classifiers::{ClassifierKind, ClassifierSpec, Model};
use crate::error::{check_dim, Result, RsmError};
use crate::graph::NeighborhoodGraph;
use crate::seed;
use crate::types::{Dataset, EffectMap, MapRole, Sample};

/// Relative variance floor: values are raised to
/// `VAR_FLOOR_REL · max(1, median positive value)`.
pub const VAR_FLOOR_REL: f64 = 1e-12;

/// σ² and ρ̄ for one test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub sigma2: Vec<f64>,
    pub mean_map: EffectMap,
}

impl NoiseEstimate {
    /// Population mean and variance (divisor `maps.len()`) of stored maps,
    /// accumulated in the given order.
    pub fn from_maps(maps: &[Vec<f64>]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| RsmError::Data("no replicate maps".into()))?;
        let d = first.len();
        let r = maps.len() as f64;
        let mut mean = vec![0.0; d];
        for m in maps {
            check_dim(d, m.len())?;
            for (a, v) in mean.iter_mut().zip(m) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= r);
        let mut var = vec![0.0; d];
        for m in maps {
            for ((s, v), mu) in var.iter_mut().zip(m).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|s| *s /= r);
        Ok(NoiseEstimate {
            sigma2: var,
            mean_map: EffectMap::new(mean, MapRole::BootstrapMean),
        })
    }
}

/// Classifiers trained on stratified bootstrap replicates of one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub models: Vec<Model>,
}

impl BootstrapEnsemble {
    /// Trains `n_bs` replicates; replicate `r` uses seed `derive(seed, [r])`.
    pub fn train(
        spec: &ClassifierSpec,
        dataset: &Dataset,
        subset: &[usize],
        n_bs: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_bs < 2 {
            return Err(RsmError::Config(format!("N_bs must be at least 2, got {n_bs}")));
        }
        dataset.require_both_classes(subset)?;
        let models = (0..n_bs)
            .into_par_iter()
            .map(|r| {
                let idx = stratified_bootstrap_of(
                    dataset,
                    subset,
                    seed::derive(seed, &[seed::tag::BOOTSTRAP, r as u64]),
                );
                spec.fit(dataset, &idx).map_err(|e| e.in_replicate(r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BootstrapEnsemble { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn replicate_maps(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.models.iter().map(|m| m.effect_values(x)).collect()
    }

    pub fn noise(&self, sample: &Sample) -> Result<NoiseEstimate> {
        if let Some(m) = self.models.first() {
            check_dim(m.dim(), sample.dim())?;
        }
        NoiseEstimate::from_maps(&self.replicate_maps(&sample.measurements))
    }

    /// Bootstrap-average map ρ̄ only.
    pub fn mean_map(&self, x: &[f64]) -> Vec<f64> {
        let mut mean = vec![0.0; x.len()];
        for m in &self.models {
            for (a, v) in mean.iter_mut().zip(m.effect_values(x)) {
                *a += v;
            }
        }
        let r = self.models.len() as f64;
        mean.iter_mut().for_each(|a| *a /= r);
        mean
    }
}

/// Trains `n_bs` bootstrap classifiers on the whole `dataset` and returns σ²
/// and ρ̄ for `test_sample`.
pub fn estimate_noise_and_mean(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    test_sample: &Sample,
    n_bs: usize,
    seed: u64,
) -> Result<NoiseEstimate> {
    check_dim(dataset.dim(), test_sample.dim())?;
    BootstrapEnsemble::train(spec, dataset, &dataset.all_indices(), n_bs, seed)?.noise(test_sample)
}

/// Parameters of the Gaussian MRF prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// ϱ_j
    pub node_var: Vec<f64>,
    /// ϱ_jk, aligned with the graph's edge list
    pub edge_var: Vec<f64>,
    /// μ_jk, kept for inspection only
    pub edge_mean: Vec<f64>,
    /// mean of ϱ_jk over edges; `None` for edgeless graphs
    pub stationary_var: Option<f64>,
    /// population mean of the ρ̄⁽ⁿ⁾ maps
    pub mean_of_means: Vec<f64>,
}

fn floor_of(values: &[f64]) -> f64 {
    let mut pos: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    let median = if pos.is_empty() {
        0.0
    } else {
        pos.sort_by(f64::total_cmp);
        let m = pos.len() / 2;
        if pos.len() % 2 == 1 {
            pos[m]
        } else {
            0.5 * (pos[m - 1] + pos[m])
        }
    };
    VAR_FLOOR_REL * median.max(1.0)
}

fn apply_floor(values: &mut [f64]) {
    let floor = floor_of(values);
    values.iter_mut().for_each(|v| *v = v.max(floor));
}

/// Prior parameters from the bootstrap-average maps ρ̄⁽ⁿ⁾ of the training
/// samples, population moments, variances floored.
pub fn prior_from_mean_maps(maps: &[Vec<f64>], graph: &NeighborhoodGraph) -> Result<PriorParams> {
    let moments = NoiseEstimate::from_maps(maps)?;
    check_dim(graph.node_count(), moments.sigma2.len())?;
    let n = maps.len() as f64;
    let mut edge_mean = vec![0.0; graph.edge_count()];
    let mut edge_var = vec![0.0; graph.edge_count()];
    for (e, &(j, k)) in graph.edges().iter().enumerate() {
        let mu = maps.iter().map(|m| m[j] - m[k]).sum::<f64>() / n;
        edge_mean[e] = mu;
        edge_var[e] = maps
            .iter()
            .map(|m| {
                let t = m[j] - m[k] - mu;
                t * t
            })
            .sum::<f64>()
            / n;
    }
    let mut node_var = moments.sigma2;
    apply_floor(&mut node_var);
    apply_floor(&mut edge_var);
    let stationary_var = if edge_var.is_empty() {
        None
    } else {
        Some(edge_var.iter().sum::<f64>() / edge_var.len() as f64)
    };
    Ok(PriorParams {
        node_var,
        edge_var,
        edge_mean,
        stationary_var,
        mean_of_means: moments.mean_map.values,
    })
}

/// Mean of ϱ_jk over the graph's edges.
pub fn stationary_variance(prior: &PriorParams, graph: &NeighborhoodGraph) -> Result<f64> {
    if graph.edge_count() == 0 {
        return Err(RsmError::Data("stationary variance needs at least one edge".into()));
    }
    check_dim(graph.edge_count(), prior.edge_var.len())?;
    Ok(prior.edge_var.iter().sum::<f64>() / prior.edge_var.len() as f64)
}

/// Settings for prior estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOptions {
    pub folds: usize,
    pub n_bs: usize,
    /// With `false`, replicates trained on the whole set map the same set.
    pub use_cv: bool,
}

impl Default for PriorOptions {
    fn default() -> Self {
        PriorOptions {
            folds: 5,
            n_bs: 100,
            use_cv: true,
        }
    }
}

/// One ρ̄⁽ⁿ⁾ per member of `subset`, in subset order. With cross-validation,
/// sample n's map comes only from replicates whose training data excludes n.
pub fn bootstrap_mean_maps(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    subset: &[usize],
    opts: &PriorOptions,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !opts.use_cv {
        let ens = BootstrapEnsemble::train(
            spec,
            dataset,
            subset,
            opts.n_bs,
            seed::derive(seed, &[seed::tag::ENSEMBLE]),
        )?;
        return Ok(subset
            .par_iter()
            .map(|&i| ens.mean_map(&dataset.sample(i).measurements))
            .collect());
    }
    let folds = stratified_folds(dataset, subset, opts.folds, seed::derive(seed, &[seed::tag::FOLDS]))?;
    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let train = complement(subset, held);
            let ens = BootstrapEnsemble::train(
                spec,
                dataset,
                &train,
                opts.n_bs,
                seed::derive(seed, &[seed::tag::ENSEMBLE, f as u64]),
            )?;
            Ok(held
                .iter()
                .map(|&i| (i, ens.mean_map(&dataset.sample(i).measurements)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_index: std::collections::HashMap<usize, Vec<f64>> =
        per_fold.into_iter().flatten().collect();
    Ok(subset
        .iter()
        .map(|i| by_index.remove(i).expect("every sample is held out once"))
        .collect())
}

/// Estimates ϱ_j, ϱ_jk, μ_jk and the stationary ϱ on `subset`.
pub fn estimate_prior_params_on(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    subset: &[usize],
    graph: &NeighborhoodGraph,
    opts: &PriorOptions,
    seed: u64,
) -> Result<PriorParams> {
    check_dim(graph.node_count(), dataset.dim())?;
    let maps = bootstrap_mean_maps(spec, dataset, subset, opts, seed)?;
    prior_from_mean_maps(&maps, graph)
}

pub fn estimate_prior_params(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    graph: &NeighborhoodGraph,
    opts: &PriorOptions,
    seed: u64,
) -> Result<PriorParams> {
    estimate_prior_params_on(spec, dataset, &dataset.all_indices(), graph, opts, seed)
}

/// Metadata stored alongside serialized prior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMeta {
    pub classifier: ClassifierKind,
    pub eta: f64,
    pub n_bs: usize,
    pub folds: usize,
    pub use_cv: bool,
    pub seed: u64,
    pub stationary_var: Option<f64>,
}
