//! Binary classifiers and their subject-specific effect maps.
//!
//! The element-wise GMM yields probit-transformed per-site posteriors; the
//! linear models yield `w ∘ f` (intercept excluded).

mod design;
pub mod ewgmm;
pub mod logreg;
pub mod svm;
pub mod tuning;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RsmError};
use crate::types::{Dataset, EffectMap, MapRole, Sample};

pub use ewgmm::{ewgmm_effect_map, train_ewgmm, EwGmmModel};
pub use logreg::{train_logreg, Penalty};
pub use svm::train_linear_svm;
pub use tuning::{eta_grid, tune_regularization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    EwGmm,
    Svm,
    LogregL2,
    LogregL1,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::EwGmm,
        ClassifierKind::Svm,
        ClassifierKind::LogregL2,
        ClassifierKind::LogregL1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::EwGmm => "ew_gmm",
            ClassifierKind::Svm => "svm",
            ClassifierKind::LogregL2 => "logreg_l2",
            ClassifierKind::LogregL1 => "logreg_l1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_linear(self) -> bool {
        self != ClassifierKind::EwGmm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Svm,
    LogRegL2,
    LogRegL1,
}

/// Trained linear classifier `y = 1[w·f + b > 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub kind: LinearKind,
    pub eta: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        design::dot(&self.w, x) + self.b
    }
}

/// `w ∘ f`; the intercept does not enter the map.
pub fn linear_effect_map(model: &LinearModel, sample: &Sample) -> Result<EffectMap> {
    check_dim(model.w.len(), sample.dim())?;
    Ok(EffectMap::new(
        model
            .w
            .iter()
            .zip(&sample.measurements)
            .map(|(w, f)| w * f)
            .collect(),
        MapRole::Raw,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative duality-gap (SVM) or gradient-norm (logistic) tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 100_000,
        }
    }
}

/// A trained classifier of any kind, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    EwGmm(EwGmmModel),
    Linear(LinearModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::EwGmm(m) => m.dim(),
            Model::Linear(m) => m.w.len(),
        }
    }

    /// Raw effect map values for a measurement vector of matching length.
    pub fn effect_values(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::EwGmm(m) => m.effect_values(x),
            Model::Linear(m) => m.w.iter().zip(x).map(|(w, f)| w * f).collect(),
        }
    }

    pub fn effect_map(&self, sample: &Sample) -> Result<EffectMap> {
        match self {
            Model::EwGmm(m) => ewgmm_effect_map(m, sample),
            Model::Linear(m) => linear_effect_map(m, sample),
        }
    }
}

/// Classifier kind plus the regularization strength used for linear models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Ignored by the element-wise GMM.
    pub eta: f64,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, eta: f64) -> Self {
        ClassifierSpec {
            kind,
            eta,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_solver(mut self, opts: SolverOptions) -> Self {
        self.solver = opts;
        self
    }

    /// Trains on the rows `indices` of `dataset` (duplicates allowed).
    pub fn fit(&self, dataset: &Dataset, indices: &[usize]) -> Result<Model> {
        if indices.is_empty() {
            return Err(RsmError::Training("empty training set".into()));
        }
        let opts = self.solver;
        Ok(match self.kind {
            ClassifierKind::EwGmm => Model::EwGmm(EwGmmModel::fit(dataset, indices)?),
            ClassifierKind::Svm => Model::Linear(svm::fit_svm(dataset, indices, self.eta, &opts)?),
            ClassifierKind::LogregL2 => Model::Linear(logreg::fit_logreg(
                dataset,
                indices,
                self.eta,
                Penalty::L2,
                &opts,
            )?),
            ClassifierKind::LogregL1 => Model::Linear(logreg::fit_logreg(
                dataset,
                indices,
                self.eta,
                Penalty::L1,
                &opts,
            )?),
        })
    }

    pub fn fit_all(&self, dataset: &Dataset) -> Result<Model> {
        self.fit(dataset, &dataset.all_indices())
    }
}
