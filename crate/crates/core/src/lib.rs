//! Reconstruction of subject-specific effect maps from binary classifiers.
//!
//! A classifier trained to separate cases from controls yields a per-site
//! effect map for any new subject. Those raw maps are noisy. This crate
//! estimates their sampling noise by bootstrap retraining, learns a Gaussian
//! Markov random field prior over the measurement graph, computes the MAP
//! map, and thresholds it so that the false-positive rate on controls stays
//! below a chosen limit.

pub mod baseline;
pub mod classifiers;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod probit;
pub mod reconstruct;
pub mod seed;
pub mod synth;
pub mod thresholding;
pub mod types;

pub use classifiers::{ClassifierKind, ClassifierSpec, Model};
pub use error::{Result, RsmError};
pub use estimation::{NoiseEstimate, PriorParams};
pub use graph::{build_grid_graph, NeighborhoodGraph};
pub use pipeline::TrainedRsm;
pub use reconstruct::{PairwiseMode, RsmConfig};
pub use thresholding::Threshold;
pub use types::{BinaryEffectMap, Dataset, EffectMap, Label, MapRole, Sample};
