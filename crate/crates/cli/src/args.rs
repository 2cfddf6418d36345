use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rsm_core::evaluation::Method;
use rsm_core::reconstruct::{Observation, PairwiseMode};
use rsm_core::ClassifierKind;

/// Environment variable consulted when `--out` is not given.
pub const OUT_DIR_ENV: &str = "RSM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rsm", version, about = "Subject-specific effect maps from binary classifiers")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground-truth effect maps.
    SynthGen(SynthArgs),
    /// Fit classifier, bootstrap ensemble and prior on a dataset.
    Train(TrainArgs),
    /// Estimate the detection threshold of a trained model by cross-validation.
    Threshold(ThresholdArgs),
    /// Reconstruct (and, with a threshold, binarize) maps for new samples.
    Reconstruct(ReconstructArgs),
    /// Run the cross-validated benchmark and write report CSVs.
    Evaluate(EvaluateArgs),
    /// Count detections per site across binary maps.
    Occurrence(OccurrenceArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory (falls back to $RSM_OUT_DIR).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator settings; flags below override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub sigma_n: Option<f64>,
    #[arg(long)]
    pub smooth_sigma: Option<f64>,
    /// Effect amplitude in multiples of sigma_n.
    #[arg(long)]
    pub effect_size: Option<f64>,
    #[arg(long)]
    pub n_controls: Option<usize>,
    #[arg(long)]
    pub n_cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Reconstruction settings shared by `train` and `threshold`.
#[derive(Debug, Args)]
pub struct RsmOverrides {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub l_fpr: Option<f64>,
    #[arg(long)]
    pub n_bs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub pairwise_mode: Option<PairwiseMode>,
    #[arg(long, value_parser = parse_observation)]
    pub observation: Option<Observation>,
    /// Estimate the prior from replicates trained on the whole set.
    #[arg(long)]
    pub no_prior_cv: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Neighbourhood edge list.
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// JSON reconstruction settings; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, value_parser = parse_classifier, default_value = "ew_gmm")]
    pub classifier: ClassifierKind,
    /// Regularization of linear classifiers; tuned by 5-fold CV if absent.
    #[arg(long)]
    pub eta: Option<f64>,
    #[command(flatten)]
    pub rsm: RsmOverrides,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Model written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// The dataset the model was trained on.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    #[command(flatten)]
    pub rsm: RsmOverrides,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Samples to reconstruct, in dataset CSV format (labels are ignored).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub pairwise_mode: Option<PairwiseMode>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON experiment settings; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory written by `synth-gen`; without it data are generated
    /// per effect size from the config.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<Method>,
    #[arg(long = "classifier", value_parser = parse_classifier)]
    pub classifiers: Vec<ClassifierKind>,
    #[arg(long = "lambda")]
    pub lambdas: Vec<f64>,
    #[arg(long = "l-fpr")]
    pub l_fprs: Vec<f64>,
    #[arg(long = "pairwise-mode", value_parser = parse_mode)]
    pub pairwise_modes: Vec<PairwiseMode>,
    #[arg(long = "effect-size")]
    pub effect_sizes: Vec<f64>,
    #[arg(long)]
    pub shuffles: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub n_bs: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OccurrenceArgs {
    /// Binary map files (one 0/1 value per line).
    #[arg(required = true, value_name = "MAP")]
    pub maps: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

fn parse_classifier(s: &str) -> Result<ClassifierKind, String> {
    ClassifierKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = ClassifierKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| "expected one of nbs, wbs, rsm, outlier".to_string())
}

fn parse_mode(s: &str) -> Result<PairwiseMode, String> {
    match s {
        "nonstationary" => Ok(PairwiseMode::Nonstationary),
        "stationary" => Ok(PairwiseMode::Stationary),
        "none" => Ok(PairwiseMode::None),
        _ => Err("expected one of nonstationary, stationary, none".into()),
    }
}

fn parse_observation(s: &str) -> Result<Observation, String> {
    match s {
        "single" => Ok(Observation::Single),
        "bootstrap_mean" => Ok(Observation::BootstrapMean),
        _ => Err("expected single or bootstrap_mean".into()),
    }
}
