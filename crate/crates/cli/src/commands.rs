use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rsm_core::evaluation::{occurrence_map, run_experiment, run_experiment_on, ExperimentConfig, ExperimentInput};
use rsm_core::io::{
    binary_to_csv, config_hash, dataset_to_csv, graph_to_edgelist, load_binary_map_csv,
    load_dataset_csv, load_graph_edgelist, values_to_csv, write_atomic, write_sidecar, OutputMeta,
};
use rsm_core::classifiers::tune_regularization;
use rsm_core::synth::{generate_dataset, SynthConfig};
use rsm_core::thresholding::cv_threshold;
use rsm_core::{build_grid_graph, seed, ClassifierSpec, Dataset, Label, RsmConfig, Sample, TrainedRsm};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::*;

fn out_dir(arg: &OutArg) -> Result<PathBuf> {
    match (&arg.out, std::env::var_os(OUT_DIR_ENV)) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(PathBuf::from(p)),
        (None, None) => bail!("no output directory: pass --out or set {OUT_DIR_ENV}"),
    }
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Output files of one invocation, all tagged with the same provenance.
struct Writer {
    dir: PathBuf,
    meta: OutputMeta,
}

impl Writer {
    fn new(dir: PathBuf, tool: &str, hash: String, seed: u64) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Writer {
            dir,
            meta: OutputMeta {
                config_hash: hash,
                seed,
                tool: format!("rsm {tool}"),
            },
        })
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        write_sidecar(&path, &self.meta)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn load_inputs(data: &Path, graph: &Path) -> Result<(Dataset, rsm_core::NeighborhoodGraph)> {
    let ds = load_dataset_csv(data)?;
    let g = load_graph_edgelist(graph)?;
    if g.node_count() != ds.dim() {
        bail!("graph has {} nodes but samples have {} measurements", g.node_count(), ds.dim());
    }
    Ok((ds, g))
}

fn apply_rsm(mut c: RsmConfig, o: &RsmOverrides) -> Result<RsmConfig> {
    if let Some(v) = o.lambda {
        c.lambda = v;
    }
    if let Some(v) = o.l_fpr {
        c.l_fpr = v;
    }
    if let Some(v) = o.n_bs {
        c.n_bs = v;
    }
    if let Some(v) = o.folds {
        c.folds = v;
    }
    if let Some(v) = o.pairwise_mode {
        c.pairwise_mode = v;
    }
    if let Some(v) = o.observation {
        c.observation = v;
    }
    if o.no_prior_cv {
        c.prior_cv = false;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

pub fn synth_gen(a: &SynthArgs) -> Result<()> {
    let mut c: SynthConfig = load_json(a.config.as_deref())?;
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = a.$f { c.$f = v; } )*};
    }
    set!(width, height, sigma_n, smooth_sigma, effect_size, n_controls, n_cases, seed);
    c.validate()?;
    let synth = generate_dataset(&c)?;
    let truth = Dataset::new(
        (0..synth.dataset.len())
            .map(|i| {
                let flags = synth.truth(i).detections.iter().map(|&q| f64::from(u8::from(q))).collect();
                Sample::new(flags, synth.dataset.label(i))
            })
            .collect::<rsm_core::Result<Vec<_>>>()?,
    )?;
    let w = Writer::new(out_dir(&a.out)?, "synth-gen", config_hash(&c)?, c.seed)?;
    w.write("dataset.csv", dataset_to_csv(&synth.dataset).as_bytes())?;
    w.write("truth.csv", dataset_to_csv(&truth).as_bytes())?;
    w.write("graph.txt", graph_to_edgelist(&build_grid_graph(c.width, c.height)).as_bytes())?;
    w.write_json("synth.json", &c)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (ds, g) = load_inputs(&a.data, &a.graph)?;
    let config = apply_rsm(load_json(a.config.as_deref())?, &a.rsm)?;
    let eta = match (a.classifier.is_linear(), a.eta) {
        (_, Some(eta)) if !(eta > 0.0 && eta.is_finite()) => bail!("--eta must be positive"),
        (_, Some(eta)) => eta,
        (false, None) => 1.0,
        (true, None) => tune_regularization(&ds, a.classifier, 5, seed::derive(config.seed, &[seed::tag::TUNING]))?,
    };
    let spec = ClassifierSpec::new(a.classifier, eta);
    let model = TrainedRsm::fit(&spec, &ds, &ds.all_indices(), &g, &config)?;
    let w = Writer::new(out_dir(&a.out)?, "train", config_hash(&(&config, &spec))?, config.seed)?;
    w.write("model.json", &serde_json::to_vec(&model)?)
}

pub fn threshold(a: &ThresholdArgs) -> Result<()> {
    let (ds, g) = load_inputs(&a.data, &a.graph)?;
    let mut model: TrainedRsm = read_json(&a.model)?;
    if model.model.dim() != ds.dim() {
        bail!("model expects {} measurements, dataset has {}", model.model.dim(), ds.dim());
    }
    let config = apply_rsm(model.config.clone(), &a.rsm)?;
    let t = cv_threshold(&model.spec, &ds, &g, &config)?;
    model.config = config;
    let model = model.with_threshold(t);
    let hash = config_hash(&(&model.config, &model.spec))?;
    let w = Writer::new(out_dir(&a.out)?, "threshold", hash, model.config.seed)?;
    w.write_json("threshold.json", &t)?;
    w.write("model.json", &serde_json::to_vec(&model)?)
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let (samples, g) = load_inputs(&a.input, &a.graph)?;
    let model: TrainedRsm = read_json(&a.model)?;
    if model.model.dim() != samples.dim() {
        bail!("model expects {} measurements, input has {}", model.model.dim(), samples.dim());
    }
    let lambda = a.lambda.unwrap_or(model.config.lambda);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        bail!("--lambda must be >= 0");
    }
    let mode = a.pairwise_mode.unwrap_or(model.config.pairwise_mode);
    let maps = samples
        .samples()
        .par_iter()
        .map(|s| model.reconstruct_with(s, &g, lambda, mode))
        .collect::<rsm_core::Result<Vec<_>>>()?;
    let hash = config_hash(&(&model.config, &model.spec, lambda, mode))?;
    let w = Writer::new(out_dir(&a.out)?, "reconstruct", hash, model.config.seed)?;
    for (i, m) in maps.iter().enumerate() {
        w.write(&format!("map_{i:04}.csv"), values_to_csv(&m.values).as_bytes())?;
        if let Some(t) = &model.threshold {
            let q = rsm_core::thresholding::threshold_map(m, t.tau);
            w.write(&format!("detect_{i:04}.csv"), binary_to_csv(&q).as_bytes())?;
        }
    }
    Ok(())
}

fn apply_experiment(c: &mut ExperimentConfig, a: &EvaluateArgs) {
    macro_rules! list {
        ($($f:ident),*) => {$( if !a.$f.is_empty() { c.$f = a.$f.clone(); } )*};
    }
    list!(methods, classifiers, lambdas, l_fprs, pairwise_modes, effect_sizes);
    if let Some(v) = a.shuffles {
        c.shuffles = v;
    }
    if let Some(v) = a.folds {
        c.folds = v;
    }
    if let Some(v) = a.n_bs {
        c.n_bs = v;
    }
    if a.eta.is_some() {
        c.eta = a.eta;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
}

/// Dataset, truth maps and graph from a `synth-gen` directory.
fn load_synth_dir(dir: &Path) -> Result<(ExperimentInput, SynthConfig, rsm_core::NeighborhoodGraph)> {
    let (dataset, graph) = load_inputs(&dir.join("dataset.csv"), &dir.join("graph.txt"))?;
    let truth_ds = load_dataset_csv(&dir.join("truth.csv"))?;
    if truth_ds.len() != dataset.len() || truth_ds.dim() != dataset.dim() {
        bail!("truth.csv does not match dataset.csv in shape");
    }
    let truth = truth_ds
        .samples()
        .iter()
        .zip(dataset.samples())
        .map(|(t, s)| {
            if t.label != s.label {
                bail!("truth.csv labels differ from dataset.csv");
            }
            let q = rsm_core::BinaryEffectMap::new(t.measurements.iter().map(|&v| v != 0.0).collect());
            if s.label == Label::Control && q.count() > 0 {
                bail!("a control has a nonempty truth map");
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;
    let synth: SynthConfig = read_json(&dir.join("synth.json"))?;
    let input = ExperimentInput {
        effect_size: synth.effect_size,
        dataset,
        truth,
    };
    Ok((input, synth, graph))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_json(a.config.as_deref())?;
    apply_experiment(&mut config, a);
    let report = match &a.data {
        Some(dir) => {
            let (input, synth, graph) = load_synth_dir(dir)?;
            config.effect_sizes = vec![input.effect_size];
            config.synth = synth;
            run_experiment_on(&config, &[input], &graph)?
        }
        None => run_experiment(&config)?,
    };
    let w = Writer::new(out_dir(&a.out)?, "evaluate", report.config_hash.clone(), report.seed)?;
    w.write("records.csv", report.records_csv().as_bytes())?;
    w.write("summary.csv", report.summary_csv().as_bytes())?;
    w.write_json("experiment.json", &config)
}

pub fn occurrence(a: &OccurrenceArgs) -> Result<()> {
    let maps = a
        .maps
        .iter()
        .map(|p| load_binary_map_csv(p).map_err(Into::into))
        .collect::<Result<Vec<_>>>()?;
    let d = maps[0].len();
    let counts = occurrence_map(&maps, d)?;
    let names: Vec<String> = a.maps.iter().map(|p| p.display().to_string()).collect();
    let w = Writer::new(out_dir(&a.out)?, "occurrence", config_hash(&names)?, 0)?;
    let text: String = counts.iter().map(|c| format!("{c}\n")).collect();
    w.write("occurrence.csv", text.as_bytes())
}
