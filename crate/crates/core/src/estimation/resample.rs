use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Result, RsmError};
use crate::seed;
use crate::types::Dataset;

/// Bootstrap replicate of `subset` at sampling rate 1 that keeps the class
/// counts exactly: controls are drawn with replacement from the controls,
/// cases from the cases.
pub fn stratified_bootstrap_of(dataset: &Dataset, subset: &[usize], seed: u64) -> Vec<usize> {
    let (controls, cases) = dataset.split_by_label(subset);
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(subset.len());
    for group in [&controls, &cases] {
        for _ in 0..group.len() {
            out.push(group[rng.random_range(0..group.len())]);
        }
    }
    out
}

pub fn stratified_bootstrap(dataset: &Dataset, seed: u64) -> Vec<usize> {
    stratified_bootstrap_of(dataset, &dataset.all_indices(), seed)
}

/// Splits `subset` into `k` held-out folds, stratified by class.
///
/// Each class is shuffled and dealt round-robin (controls first, cases
/// continuing the rotation), so every training complement contains both
/// classes whenever each class has at least two members. Folds are returned
/// sorted.
pub fn stratified_folds(
    dataset: &Dataset,
    subset: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(RsmError::Config(format!("need at least 2 folds, got {k}")));
    }
    if subset.len() < k {
        return Err(RsmError::Config(format!(
            "cannot split {} samples into {k} folds",
            subset.len()
        )));
    }
    let (mut controls, mut cases) = dataset.split_by_label(subset);
    if controls.len() < 2 || cases.len() < 2 {
        return Err(RsmError::Training(format!(
            "cannot stratify {} controls and {} cases so every training fold has both classes",
            controls.len(),
            cases.len()
        )));
    }
    let mut rng = seed::rng(seed);
    controls.shuffle(&mut rng);
    cases.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (p, i) in controls.into_iter().chain(cases).enumerate() {
        folds[p % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// `subset` minus the members of `held`.
pub fn complement(subset: &[usize], held: &[usize]) -> Vec<usize> {
    subset
        .iter()
        .copied()
        .filter(|i| held.binary_search(i).is_err())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Label, Sample};

    fn balanced(n0: usize, n1: usize) -> Dataset {
        let mk = |i: usize, l| Sample::new(vec![i as f64], l).unwrap();
        Dataset::new(
            (0..n0)
                .map(|i| mk(i, Label::Control))
                .chain((0..n1).map(|i| mk(i, Label::Case)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_keeps_class_counts() {
        let ds = balanced(50, 50);
        let idx = stratified_bootstrap(&ds, 3);
        assert_eq!(idx.len(), 100);
        assert_eq!(ds.count_cases(&idx), 50);
        assert_eq!(idx, stratified_bootstrap(&ds, 3));
        assert_ne!(idx, stratified_bootstrap(&ds, 4));

        let ds = balanced(30, 12);
        let sub: Vec<usize> = (5..42).collect();
        let idx = stratified_bootstrap_of(&ds, &sub, 9);
        assert_eq!(idx.len(), sub.len());
        assert_eq!(ds.count_cases(&idx), 12);
        assert!(idx.iter().all(|i| sub.contains(i)));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let ds = balanced(23, 17);
        let all = ds.all_indices();
        let folds = stratified_folds(&ds, &all, 5, 1).unwrap();
        let mut seen: Vec<usize> = folds.concat();
        seen.sort_unstable();
        assert_eq!(seen, all);
        for f in &folds {
            let cases = ds.count_cases(f);
            assert!((3..=4).contains(&cases), "{cases}");
            assert!((7..=9).contains(&f.len()));
            let train = complement(&all, f);
            assert_eq!(train.len() + f.len(), 40);
        }
    }

    #[test]
    fn fold_errors() {
        let ds = balanced(5, 1);
        assert!(stratified_folds(&ds, &ds.all_indices(), 2, 0).is_err());
        let ds = balanced(2, 2);
        assert!(stratified_folds(&ds, &ds.all_indices(), 5, 0).is_err());
        assert!(stratified_folds(&ds, &ds.all_indices(), 1, 0).is_err());
    }
}
