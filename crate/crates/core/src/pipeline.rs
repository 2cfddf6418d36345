//! End-to-end composition: classifier, bootstrap noise, prior, MAP solve.

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierSpec, Model};
use crate::error::{check_dim, Result, RsmError};
use crate::estimation::{
    estimate_noise_and_mean, estimate_prior_params_on, BootstrapEnsemble, NoiseEstimate,
    PriorOptions, PriorParams,
};
use crate::graph::NeighborhoodGraph;
use crate::reconstruct::{reconstruct_map, Observation, PairwiseMode, RsmConfig};
use crate::seed;
use crate::thresholding::{threshold_map, Threshold};
use crate::types::{BinaryEffectMap, Dataset, EffectMap, Sample};

/// Everything learned from one training set.
///
/// The bootstrap ensemble uses `config.seed` directly; the prior uses
/// `derive(config.seed, [PRIOR])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRsm {
    pub spec: ClassifierSpec,
    pub config: RsmConfig,
    /// Classifier trained once on the full training set (source of ρ̂).
    pub model: Model,
    pub ensemble: BootstrapEnsemble,
    pub prior: PriorParams,
    pub threshold: Option<Threshold>,
}

impl TrainedRsm {
    pub fn fit(
        spec: &ClassifierSpec,
        dataset: &Dataset,
        subset: &[usize],
        graph: &NeighborhoodGraph,
        config: &RsmConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(graph.node_count(), dataset.dim())?;
        let model = spec.fit(dataset, subset)?;
        let ensemble = BootstrapEnsemble::train(spec, dataset, subset, config.n_bs, config.seed)?;
        let prior = estimate_prior_params_on(
            spec,
            dataset,
            subset,
            graph,
            &PriorOptions {
                folds: config.folds,
                n_bs: config.n_bs,
                use_cv: config.prior_cv,
            },
            seed::derive(config.seed, &[seed::tag::PRIOR]),
        )?;
        Ok(TrainedRsm {
            spec: *spec,
            config: config.clone(),
            model,
            ensemble,
            prior,
            threshold: None,
        })
    }

    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn noise(&self, sample: &Sample) -> Result<NoiseEstimate> {
        self.ensemble.noise(sample)
    }

    /// ρ̂ for `sample`.
    pub fn raw_map(&self, sample: &Sample) -> Result<EffectMap> {
        self.model.effect_map(sample)
    }

    /// ρ* for `sample` at the given λ and pairwise mode.
    pub fn reconstruct_with(
        &self,
        sample: &Sample,
        graph: &NeighborhoodGraph,
        lambda: f64,
        mode: PairwiseMode,
    ) -> Result<EffectMap> {
        let noise = self.noise(sample)?;
        let observed = match self.config.observation {
            Observation::Single => self.model.effect_values(&sample.measurements),
            Observation::BootstrapMean => noise.mean_map.values.clone(),
        };
        reconstruct_map(&observed, &noise.sigma2, &self.prior, lambda, graph, mode)
    }

    pub fn reconstruct(&self, sample: &Sample, graph: &NeighborhoodGraph) -> Result<EffectMap> {
        self.reconstruct_with(sample, graph, self.config.lambda, self.config.pairwise_mode)
    }

    /// Binary detection map; requires a threshold.
    pub fn detect(&self, sample: &Sample, graph: &NeighborhoodGraph) -> Result<BinaryEffectMap> {
        let t = self
            .threshold
            .as_ref()
            .ok_or_else(|| RsmError::Config("model has no threshold; run threshold estimation first".into()))?;
        Ok(threshold_map(&self.reconstruct(sample, graph)?, t.tau))
    }
}

/// Single-sample reconstruction from a precomputed prior: trains ρ̂ on the
/// full dataset, estimates σ² with `config.n_bs` replicates seeded by
/// `config.seed`, and solves.
pub fn reconstruct_for_sample(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    prior: &PriorParams,
    config: &RsmConfig,
    graph: &NeighborhoodGraph,
    test_sample: &Sample,
) -> Result<EffectMap> {
    config.validate()?;
    check_dim(dataset.dim(), test_sample.dim())?;
    let noise = estimate_noise_and_mean(spec, dataset, test_sample, config.n_bs, config.seed)?;
    let observed = match config.observation {
        Observation::Single => spec.fit_all(dataset)?.effect_values(&test_sample.measurements),
        Observation::BootstrapMean => noise.mean_map.values,
    };
    reconstruct_map(&observed, &noise.sigma2, prior, config.lambda, graph, config.pairwise_mode)
}
