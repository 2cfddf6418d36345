//! Regularization selection by stratified k-fold cross-validation.

use rayon::prelude::*;

use super::{ClassifierKind, ClassifierSpec, Model, SolverOptions};
use crate::error::{Result, RsmError};
use crate::estimation::stratified_folds;
use crate::seed;
use crate::types::Dataset;

/// Nine log-spaced values 10⁻³ … 10³.
pub fn eta_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-3.0 + 0.75 * i as f64)).collect()
}

/// Mean held-out accuracy of `spec` over stratified folds of `indices`.
pub fn cv_accuracy(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    indices: &[usize],
    folds: &[Vec<usize>],
) -> Result<f64> {
    let mut total = 0.0;
    for held in folds {
        let train: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|i| !held.contains(i))
            .collect();
        let Model::Linear(model) = spec.fit(dataset, &train)? else {
            return Err(RsmError::Config("accuracy tuning needs a linear classifier".into()));
        };
        let correct = held
            .iter()
            .filter(|&&i| {
                let s = dataset.sample(i);
                (model.decision(&s.measurements) > 0.0) == s.label.is_case()
            })
            .count();
        total += correct as f64 / held.len() as f64;
    }
    Ok(total / folds.len() as f64)
}

/// Grid value with the highest mean CV accuracy on `indices`; ties go to
/// the smallest value.
pub fn tune_on(
    kind: ClassifierKind,
    dataset: &Dataset,
    indices: &[usize],
    folds: usize,
    grid: &[f64],
    seed: u64,
    solver: SolverOptions,
) -> Result<f64> {
    if !kind.is_linear() {
        return Err(RsmError::Config(format!("{} has no regularization parameter", kind.name())));
    }
    if grid.is_empty() {
        return Err(RsmError::Config("empty regularization grid".into()));
    }
    let splits = stratified_folds(dataset, indices, folds, seed::derive(seed, &[seed::tag::TUNING]))?;
    let scores = grid
        .par_iter()
        .map(|&eta| {
            cv_accuracy(
                &ClassifierSpec::new(kind, eta).with_solver(solver),
                dataset,
                indices,
                &splits,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

pub fn tune_regularization(
    dataset: &Dataset,
    kind: ClassifierKind,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    tune_on(
        kind,
        dataset,
        &dataset.all_indices(),
        folds,
        &eta_grid(),
        seed,
        SolverOptions::default(),
    )
}
