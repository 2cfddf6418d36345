//! Repeated stratified k-fold evaluation on labelled data with known truth.
//!
//! Per outer fold, every method is fit on the training portion only. Its
//! threshold comes from an inner k-fold loop over that same portion, which
//! reconstructs held-out training controls and pools their maps. The held-out
//! samples of the outer fold are then mapped, binarized and scored: DSC on
//! cases, FPR on controls.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_normative, outlier_score_map};
use crate::classifiers::tuning::{eta_grid, tune_on};
use crate::classifiers::{ClassifierKind, ClassifierSpec, Model, SolverOptions};
use crate::error::{Result, RsmError};
use crate::estimation::{
    complement, estimate_prior_params_on, stratified_folds, BootstrapEnsemble, PriorOptions,
    PriorParams,
};
use crate::graph::{build_grid_graph, NeighborhoodGraph};
use crate::io::config_hash;
use crate::reconstruct::{reconstruct_map, Observation, PairwiseMode};
use crate::seed;
use crate::synth::{generate_dataset, SynthConfig};
use crate::thresholding::{threshold_from_values, threshold_map};
use crate::types::{BinaryEffectMap, Dataset, EffectMap, MapRole, Sample};

use super::{dsc, fpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Single classifier map, no resampling.
    Nbs,
    /// Bootstrap-average map.
    Wbs,
    /// MAP reconstruction.
    Rsm,
    /// Normative-model |z| scores.
    Outlier,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nbs, Method::Wbs, Method::Rsm, Method::Outlier];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nbs => "nbs",
            Method::Wbs => "wbs",
            Method::Rsm => "rsm",
            Method::Outlier => "outlier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

fn mode_name(mode: PairwiseMode) -> &'static str {
    match mode {
        PairwiseMode::Nonstationary => "nonstationary",
        PairwiseMode::Stationary => "stationary",
        PairwiseMode::None => "none",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Image geometry and noise; `effect_size` and `seed` are set per run.
    pub synth: SynthConfig,
    pub effect_sizes: Vec<f64>,
    pub methods: Vec<Method>,
    pub classifiers: Vec<ClassifierKind>,
    pub lambdas: Vec<f64>,
    pub l_fprs: Vec<f64>,
    pub pairwise_modes: Vec<PairwiseMode>,
    pub shuffles: usize,
    pub folds: usize,
    pub n_bs: usize,
    /// Inner folds for prior estimation.
    pub prior_folds: usize,
    /// Inner folds for threshold estimation.
    pub threshold_folds: usize,
    pub prior_cv: bool,
    pub observation: Observation,
    /// Fixed regularization for linear classifiers; tuned per fold if unset.
    pub eta: Option<f64>,
    pub tuning_folds: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            effect_sizes: vec![1.0, 1.4, 2.0],
            methods: Method::ALL.to_vec(),
            classifiers: vec![ClassifierKind::EwGmm],
            lambdas: vec![0.0, 1.0, 2.5, 5.0],
            l_fprs: vec![0.01, 0.001],
            pairwise_modes: vec![PairwiseMode::Nonstationary],
            shuffles: 10,
            folds: 5,
            n_bs: 100,
            prior_folds: 5,
            threshold_folds: 5,
            prior_cv: true,
            observation: Observation::Single,
            eta: None,
            tuning_folds: 5,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RsmError::Config(m.to_string()));
        if self.effect_sizes.is_empty()
            || self.methods.is_empty()
            || self.classifiers.is_empty()
            || self.lambdas.is_empty()
            || self.l_fprs.is_empty()
            || self.pairwise_modes.is_empty()
        {
            return bad("every sweep list must be nonempty");
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambdas must be finite and >= 0");
        }
        if self.l_fprs.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return bad("l_fprs must lie in (0,1)");
        }
        if self.shuffles == 0 {
            return bad("shuffles must be at least 1");
        }
        if self.folds < 2 || self.prior_folds < 2 || self.threshold_folds < 2 || self.tuning_folds < 2 {
            return bad("fold counts must be at least 2");
        }
        if self.n_bs < 2 {
            return bad("n_bs must be at least 2");
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("eta must be positive");
            }
        }
        Ok(())
    }

    /// Generator settings for one effect size.
    pub fn synth_for(&self, effect_size: f64) -> SynthConfig {
        SynthConfig {
            effect_size,
            seed: seed::derive(self.seed, &[seed::tag::SAMPLE]),
            ..self.synth.clone()
        }
    }
}

/// One labelled dataset with per-sample truth maps.
#[derive(Debug, Clone)]
pub struct ExperimentInput {
    pub effect_size: f64,
    pub dataset: Dataset,
    pub truth: Vec<BinaryEffectMap>,
}

/// Scores of one configuration on one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub effect_size: f64,
    pub method: Method,
    pub classifier: ClassifierKind,
    pub pairwise_mode: PairwiseMode,
    pub lambda: f64,
    pub l_fpr: f64,
    pub shuffle: usize,
    pub fold: usize,
    pub eta: f64,
    pub tau: f64,
    pub n_cases: usize,
    pub dsc_sum: f64,
    pub n_controls: usize,
    pub fpr_sum: f64,
}

impl FoldRecord {
    pub fn mean_dsc(&self) -> f64 {
        self.dsc_sum / self.n_cases as f64
    }

    pub fn mean_fpr(&self) -> f64 {
        self.fpr_sum / self.n_controls as f64
    }
}

/// Configuration averaged over folds (pooling samples) and then shuffles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub effect_size: f64,
    pub method: Method,
    pub classifier: ClassifierKind,
    pub pairwise_mode: PairwiseMode,
    pub lambda: f64,
    pub l_fpr: f64,
    pub mean_dsc: f64,
    pub mean_fpr: f64,
    pub shuffle_dsc: Vec<f64>,
    pub shuffle_fpr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<FoldRecord>,
    pub summary: Vec<SummaryRow>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl ExperimentReport {
    pub fn find(
        &self,
        effect_size: f64,
        method: Method,
        classifier: ClassifierKind,
        pairwise_mode: PairwiseMode,
        lambda: f64,
        l_fpr: f64,
    ) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.effect_size == effect_size
                && r.method == method
                && r.classifier == classifier
                && r.pairwise_mode == pairwise_mode
                && r.lambda == lambda
                && r.l_fpr == l_fpr
        })
    }

    fn header(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }

    /// One line per (configuration, shuffle, fold).
    pub fn records_csv(&self) -> String {
        let mut out = self.header();
        out.push_str(
            "effect_size,method,classifier,pairwise_mode,lambda,l_fpr,shuffle,fold,eta,tau,n_cases,mean_dsc,n_controls,mean_fpr\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.effect_size,
                r.method.name(),
                r.classifier.name(),
                mode_name(r.pairwise_mode),
                r.lambda,
                r.l_fpr,
                r.shuffle,
                r.fold,
                r.eta,
                r.tau,
                r.n_cases,
                r.mean_dsc(),
                r.n_controls,
                r.mean_fpr()
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = self.header();
        out.push_str(
            "effect_size,method,classifier,pairwise_mode,lambda,l_fpr,mean_dsc,mean_fpr,shuffle_dsc,shuffle_fpr\n",
        );
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.effect_size,
                r.method.name(),
                r.classifier.name(),
                mode_name(r.pairwise_mode),
                r.lambda,
                r.l_fpr,
                r.mean_dsc,
                r.mean_fpr,
                join(&r.shuffle_dsc),
                join(&r.shuffle_fpr)
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    Nbs,
    Wbs,
    Rsm(PairwiseMode, f64),
}

fn variants(config: &ExperimentConfig) -> Vec<Variant> {
    let mut v = Vec::new();
    if config.methods.contains(&Method::Nbs) {
        v.push(Variant::Nbs);
    }
    if config.methods.contains(&Method::Wbs) {
        v.push(Variant::Wbs);
    }
    if config.methods.contains(&Method::Rsm) {
        for &mode in &config.pairwise_modes {
            for &lambda in &config.lambdas {
                v.push(Variant::Rsm(mode, lambda));
            }
        }
    }
    v
}

/// Classifier, bootstrap ensemble and (for RSM) prior fit on one subset.
/// Seeds follow [`crate::pipeline::TrainedRsm`].
struct FoldModel {
    model: Model,
    ensemble: Option<BootstrapEnsemble>,
    prior: Option<PriorParams>,
}

impl FoldModel {
    fn fit(
        spec: &ClassifierSpec,
        dataset: &Dataset,
        subset: &[usize],
        graph: &NeighborhoodGraph,
        config: &ExperimentConfig,
        variants: &[Variant],
        seed: u64,
    ) -> Result<Self> {
        let model = spec.fit(dataset, subset)?;
        let needs_noise = variants.iter().any(|v| *v != Variant::Nbs);
        let needs_prior = variants.iter().any(|v| matches!(v, Variant::Rsm(..)));
        let ensemble = needs_noise
            .then(|| BootstrapEnsemble::train(spec, dataset, subset, config.n_bs, seed))
            .transpose()?;
        let prior = needs_prior
            .then(|| {
                estimate_prior_params_on(
                    spec,
                    dataset,
                    subset,
                    graph,
                    &PriorOptions {
                        folds: config.prior_folds,
                        n_bs: config.n_bs,
                        use_cv: config.prior_cv,
                    },
                    seed::derive(seed, &[seed::tag::PRIOR]),
                )
            })
            .transpose()?;
        Ok(FoldModel {
            model,
            ensemble,
            prior,
        })
    }

    fn maps(
        &self,
        sample: &Sample,
        variants: &[Variant],
        graph: &NeighborhoodGraph,
        observation: Observation,
    ) -> Result<Vec<Vec<f64>>> {
        let raw = self.model.effect_values(&sample.measurements);
        let noise = self.ensemble.as_ref().map(|e| e.noise(sample)).transpose()?;
        variants
            .iter()
            .map(|v| match *v {
                Variant::Nbs => Ok(raw.clone()),
                Variant::Wbs => Ok(noise.as_ref().expect("ensemble").mean_map.values.clone()),
                Variant::Rsm(mode, lambda) => {
                    let noise = noise.as_ref().expect("ensemble");
                    let observed = match observation {
                        Observation::Single => &raw,
                        Observation::BootstrapMean => &noise.mean_map.values,
                    };
                    let prior = self.prior.as_ref().expect("prior");
                    Ok(reconstruct_map(observed, &noise.sigma2, prior, lambda, graph, mode)?.values)
                }
            })
            .collect()
    }
}

/// Threshold and test scores of one map family.
#[derive(Debug, Clone, Copy)]
struct Scored {
    tau: f64,
    n_cases: usize,
    dsc_sum: f64,
    n_controls: usize,
    fpr_sum: f64,
}

fn score(
    pool: &[f64],
    test_maps: &[Vec<f64>],
    held: &[usize],
    input: &ExperimentInput,
    l_fprs: &[f64],
) -> Result<Vec<Scored>> {
    l_fprs
        .iter()
        .map(|&l| {
            let tau = threshold_from_values(pool, l)?;
            let mut s = Scored {
                tau,
                n_cases: 0,
                dsc_sum: 0.0,
                n_controls: 0,
                fpr_sum: 0.0,
            };
            for (map, &i) in test_maps.iter().zip(held) {
                let q = threshold_map(&EffectMap::new(map.clone(), MapRole::Reconstructed), tau);
                if input.dataset.label(i).is_case() {
                    s.n_cases += 1;
                    s.dsc_sum += dsc(&q, &input.truth[i])?;
                } else {
                    s.n_controls += 1;
                    s.fpr_sum += fpr(&q);
                }
            }
            Ok(s)
        })
        .collect()
}

fn controls_of(dataset: &Dataset, idx: &[usize]) -> Vec<usize> {
    dataset.split_by_label(idx).0
}

struct FoldContext<'a> {
    config: &'a ExperimentConfig,
    input: &'a ExperimentInput,
    graph: &'a NeighborhoodGraph,
    shuffle: usize,
    fold: usize,
    held: &'a [usize],
}

impl FoldContext<'_> {
    fn run(&self) -> Result<Vec<FoldRecord>> {
        let FoldContext {
            config,
            input,
            graph,
            shuffle,
            fold,
            held,
        } = *self;
        let ds = &input.dataset;
        let train = complement(&ds.all_indices(), held);
        let fold_seed = seed::derive(config.seed, &[seed::tag::SHUFFLE, shuffle as u64, fold as u64]);
        let inner = stratified_folds(
            ds,
            &train,
            config.threshold_folds,
            seed::derive(fold_seed, &[seed::tag::THRESHOLD]),
        )?;

        let outlier = if config.methods.contains(&Method::Outlier) {
            let pool = inner
                .iter()
                .map(|h| {
                    let nm = fit_normative(ds, &complement(&train, h))?;
                    controls_of(ds, h)
                        .into_iter()
                        .map(|i| Ok(outlier_score_map(&nm, ds.sample(i))?.values))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
                .concat()
                .concat();
            let nm = fit_normative(ds, &train)?;
            let test = held
                .iter()
                .map(|&i| Ok(outlier_score_map(&nm, ds.sample(i))?.values))
                .collect::<Result<Vec<_>>>()?;
            Some(score(&pool, &test, held, input, &config.l_fprs)?)
        } else {
            None
        };

        let vars = variants(config);
        let mut per_classifier = Vec::with_capacity(config.classifiers.len());
        for (ci, &kind) in config.classifiers.iter().enumerate() {
            let eta = match (kind.is_linear(), config.eta) {
                (false, _) => 1.0,
                (true, Some(eta)) => eta,
                (true, None) => tune_on(
                    kind,
                    ds,
                    &train,
                    config.tuning_folds,
                    &eta_grid(),
                    seed::derive(fold_seed, &[seed::tag::TUNING, ci as u64]),
                    SolverOptions::default(),
                )?,
            };
            let spec = ClassifierSpec::new(kind, eta);
            let scored = if vars.is_empty() {
                Vec::new()
            } else {
                let inner_maps = inner
                    .par_iter()
                    .enumerate()
                    .map(|(g, h)| {
                        let fm = FoldModel::fit(
                            &spec,
                            ds,
                            &complement(&train, h),
                            graph,
                            config,
                            &vars,
                            seed::derive(fold_seed, &[seed::tag::THRESHOLD, g as u64, ci as u64]),
                        )?;
                        controls_of(ds, h)
                            .into_iter()
                            .map(|i| fm.maps(ds.sample(i), &vars, graph, config.observation))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
                    .concat();
                let fm = FoldModel::fit(
                    &spec,
                    ds,
                    &train,
                    graph,
                    config,
                    &vars,
                    seed::derive(fold_seed, &[seed::tag::ENSEMBLE, ci as u64]),
                )?;
                let test = held
                    .par_iter()
                    .map(|&i| fm.maps(ds.sample(i), &vars, graph, config.observation))
                    .collect::<Result<Vec<_>>>()?;
                (0..vars.len())
                    .map(|v| {
                        let pool: Vec<f64> = inner_maps.iter().flat_map(|m| m[v].iter().copied()).collect();
                        let maps: Vec<Vec<f64>> = test.iter().map(|m| m[v].clone()).collect();
                        score(&pool, &maps, held, input, &config.l_fprs)
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            per_classifier.push((eta, scored));
        }

        let mut records = Vec::new();
        for &method in &config.methods {
            for (ci, &classifier) in config.classifiers.iter().enumerate() {
                let (eta, scored) = &per_classifier[ci];
                for &mode in &config.pairwise_modes {
                    for &lambda in &config.lambdas {
                        let row = match method {
                            Method::Outlier => outlier.as_ref().expect("outlier scores"),
                            _ => {
                                let want = match method {
                                    Method::Nbs => Variant::Nbs,
                                    Method::Wbs => Variant::Wbs,
                                    _ => Variant::Rsm(mode, lambda),
                                };
                                &scored[vars.iter().position(|v| *v == want).expect("variant")]
                            }
                        };
                        for (li, &l_fpr) in config.l_fprs.iter().enumerate() {
                            let s = row[li];
                            records.push(FoldRecord {
                                effect_size: input.effect_size,
                                method,
                                classifier,
                                pairwise_mode: mode,
                                lambda,
                                l_fpr,
                                shuffle,
                                fold,
                                eta: if method == Method::Outlier { f64::NAN } else { *eta },
                                tau: s.tau,
                                n_cases: s.n_cases,
                                dsc_sum: s.dsc_sum,
                                n_controls: s.n_controls,
                                fpr_sum: s.fpr_sum,
                            });
                        }
                    }
                }
            }
        }
        Ok(records)
    }
}

fn summarize(records: &[FoldRecord], shuffles: usize) -> Vec<SummaryRow> {
    struct Acc {
        row: SummaryRow,
        sums: Vec<[f64; 4]>,
    }
    let mut order: Vec<Acc> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in records {
        let key = format!(
            "{}|{:?}|{:?}|{:?}|{}|{}",
            r.effect_size, r.method, r.classifier, r.pairwise_mode, r.lambda, r.l_fpr
        );
        let k = *index.entry(key).or_insert_with(|| {
            order.push(Acc {
                row: SummaryRow {
                    effect_size: r.effect_size,
                    method: r.method,
                    classifier: r.classifier,
                    pairwise_mode: r.pairwise_mode,
                    lambda: r.lambda,
                    l_fpr: r.l_fpr,
                    mean_dsc: 0.0,
                    mean_fpr: 0.0,
                    shuffle_dsc: Vec::new(),
                    shuffle_fpr: Vec::new(),
                },
                sums: vec![[0.0; 4]; shuffles],
            });
            order.len() - 1
        });
        let s = &mut order[k].sums[r.shuffle];
        s[0] += r.dsc_sum;
        s[1] += r.n_cases as f64;
        s[2] += r.fpr_sum;
        s[3] += r.n_controls as f64;
    }
    order
        .into_iter()
        .map(|mut acc| {
            acc.row.shuffle_dsc = acc.sums.iter().map(|s| s[0] / s[1]).collect();
            acc.row.shuffle_fpr = acc.sums.iter().map(|s| s[2] / s[3]).collect();
            let n = shuffles as f64;
            acc.row.mean_dsc = acc.row.shuffle_dsc.iter().sum::<f64>() / n;
            acc.row.mean_fpr = acc.row.shuffle_fpr.iter().sum::<f64>() / n;
            acc.row
        })
        .collect()
}

/// Runs the protocol on supplied datasets. Outer splits depend only on the
/// master seed and the shuffle index, so all inputs share them when their
/// labels agree.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    inputs: &[ExperimentInput],
    graph: &NeighborhoodGraph,
) -> Result<ExperimentReport> {
    config.validate()?;
    for input in inputs {
        if input.truth.len() != input.dataset.len() {
            return Err(RsmError::Data("one truth map per sample is required".into()));
        }
        crate::error::check_dim(graph.node_count(), input.dataset.dim())?;
    }
    let mut jobs = Vec::new();
    for (e, input) in inputs.iter().enumerate() {
        for s in 0..config.shuffles {
            let folds = stratified_folds(
                &input.dataset,
                &input.dataset.all_indices(),
                config.folds,
                seed::derive(config.seed, &[seed::tag::SHUFFLE, s as u64]),
            )?;
            for (f, held) in folds.into_iter().enumerate() {
                jobs.push((e, s, f, held));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|(e, s, f, held)| {
            FoldContext {
                config,
                input: &inputs[*e],
                graph,
                shuffle: *s,
                fold: *f,
                held,
            }
            .run()
            .map_err(|err| err.in_fold(*s, *f))
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(ExperimentReport {
        config_hash: config_hash(config)?,
        seed: config.seed,
        summary: summarize(&records, config.shuffles),
        records,
    })
}

/// Generates one synthetic dataset per effect size (shared noise) and runs
/// the protocol on a 4-neighbourhood grid.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let inputs = config
        .effect_sizes
        .iter()
        .map(|&e| {
            let synth = generate_dataset(&config.synth_for(e))?;
            let truth = (0..synth.dataset.len()).map(|i| synth.truth(i)).collect();
            Ok(ExperimentInput {
                effect_size: e,
                dataset: synth.dataset,
                truth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = build_grid_graph(config.synth.width, config.synth.height);
    run_experiment_on(config, &inputs, &graph)
}
