use proptest::prelude::*;
use rsm_core::classifiers::{ClassifierKind, ClassifierSpec};
use rsm_core::estimation::{
    bootstrap_mean_maps, complement, estimate_noise_and_mean, estimate_prior_params,
    prior_from_mean_maps, stationary_variance, stratified_bootstrap, stratified_folds,
    BootstrapEnsemble, PriorOptions, VAR_FLOOR_REL,
};
use rsm_core::graph::NeighborhoodGraph;
use rsm_core::seed::{self, tag};
use rsm_core::synth::{generate_dataset, SynthConfig};
use rsm_core::{build_grid_graph, Dataset, Label, Sample};

fn synthetic(n_controls: usize, n_cases: usize, seed: u64) -> Dataset {
    generate_dataset(&SynthConfig {
        width: 40,
        height: 40,
        n_controls,
        n_cases,
        effect_size: 2.0,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .dataset
}

fn gmm() -> ClassifierSpec {
    ClassifierSpec::new(ClassifierKind::EwGmm, 1.0)
}

#[test]
fn noise_matches_stored_replicates() {
    let ds = synthetic(20, 20, 1);
    let test = synthetic(1, 2, 99).sample(2).clone();
    let est = estimate_noise_and_mean(&gmm(), &ds, &test, 10, 7).unwrap();
    let ens = BootstrapEnsemble::train(&gmm(), &ds, &ds.all_indices(), 10, 7).unwrap();
    let maps: Vec<Vec<f64>> = ens.models.iter().map(|m| m.effect_values(&test.measurements)).collect();
    assert_eq!(maps.len(), 10);
    for j in 0..ds.dim() {
        let mean = maps.iter().map(|m| m[j]).sum::<f64>() / 10.0;
        let var = maps.iter().map(|m| (m[j] - mean).powi(2)).sum::<f64>() / 10.0;
        assert!((est.mean_map.values[j] - mean).abs() < 1e-12);
        assert!((est.sigma2[j] - var).abs() < 1e-12 * (1.0 + var));
    }
    assert!(est.sigma2.iter().any(|&v| v > 0.0));
}

#[test]
fn identical_training_rows_give_zero_noise() {
    let rows: Vec<Sample> = (0..8)
        .map(|i| {
            let label = if i < 4 { Label::Control } else { Label::Case };
            let base = if i < 4 { vec![0.0, 1.0] } else { vec![2.0, -1.0] };
            Sample::new(base, label).unwrap()
        })
        .collect();
    let ds = Dataset::new(rows).unwrap();
    let s = Sample::new(vec![1.5, 0.0], Label::Case).unwrap();
    let est = estimate_noise_and_mean(&gmm(), &ds, &s, 5, 3).unwrap();
    assert_eq!(est.sigma2, vec![0.0, 0.0]);
    let single = gmm().fit_all(&ds).unwrap().effect_values(&s.measurements);
    assert_eq!(est.mean_map.values, single);
}

#[test]
fn replicate_count_is_validated() {
    let ds = synthetic(4, 4, 2);
    assert!(estimate_noise_and_mean(&gmm(), &ds, ds.sample(0), 1, 0).is_err());
}

proptest! {
    #[test]
    fn bootstrap_keeps_class_ratio(n0 in 1usize..30, n1 in 1usize..30, s in any::<u64>()) {
        let rows: Vec<Sample> = (0..n0 + n1)
            .map(|i| Sample::new(vec![i as f64], if i < n0 { Label::Control } else { Label::Case }).unwrap())
            .collect();
        let ds = Dataset::new(rows).unwrap();
        let idx = stratified_bootstrap(&ds, s);
        prop_assert_eq!(idx.len(), n0 + n1);
        prop_assert_eq!(ds.count_cases(&idx), n1);
    }

    #[test]
    fn folds_partition_the_subset(n0 in 2usize..25, n1 in 2usize..25, k in 2usize..6, s in any::<u64>()) {
        prop_assume!(n0 + n1 >= k);
        let rows: Vec<Sample> = (0..n0 + n1)
            .map(|i| Sample::new(vec![i as f64], if i < n0 { Label::Control } else { Label::Case }).unwrap())
            .collect();
        let ds = Dataset::new(rows).unwrap();
        let all = ds.all_indices();
        let folds = stratified_folds(&ds, &all, k, s).unwrap();
        let mut seen = folds.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, all.clone());
        for f in &folds {
            let train = complement(&all, f);
            prop_assert!(ds.count_cases(&train) > 0 && ds.count_cases(&train) < train.len());
        }
    }
}

#[test]
fn prior_matches_recomputation() {
    let g = NeighborhoodGraph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
    let maps: Vec<Vec<f64>> = (0..7)
        .map(|n| {
            let t = n as f64;
            vec![t.sin(), (1.3 * t).cos(), 0.2 * t, (t * t) % 3.0]
        })
        .collect();
    let p = prior_from_mean_maps(&maps, &g).unwrap();
    let var = |f: &dyn Fn(&Vec<f64>) -> f64| {
        let m = maps.iter().map(f).sum::<f64>() / 7.0;
        maps.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / 7.0
    };
    for j in 0..4 {
        assert!((p.node_var[j] - var(&|x| x[j])).abs() < 1e-12);
    }
    for (e, &(j, k)) in g.edges().iter().enumerate() {
        assert!((p.edge_var[e] - var(&|x| x[j] - x[k])).abs() < 1e-12);
        let mu = maps.iter().map(|x| x[j] - x[k]).sum::<f64>() / 7.0;
        assert!((p.edge_mean[e] - mu).abs() < 1e-12);
    }
    let direct = p.edge_var.iter().sum::<f64>() / 4.0;
    assert!((stationary_variance(&p, &g).unwrap() - direct).abs() < 1e-15);
    assert_eq!(p.stationary_var, Some(stationary_variance(&p, &g).unwrap()));
}

#[test]
fn stationary_constant_edges() {
    let g = build_grid_graph(3, 3);
    let maps = vec![vec![0.0; 9], vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]];
    let p = prior_from_mean_maps(&maps, &g).unwrap();
    // every edge joins +1 and -1 sites: difference 0 or ±2, variance 1
    assert!(p.edge_var.iter().all(|&v| v == 1.0));
    assert_eq!(stationary_variance(&p, &g).unwrap(), 1.0);
}

#[test]
fn identical_maps_floor_both_fields() {
    let g = build_grid_graph(2, 2);
    let p = prior_from_mean_maps(&vec![vec![3.0; 4]; 5], &g).unwrap();
    assert!(p.node_var.iter().chain(&p.edge_var).all(|&v| v == VAR_FLOOR_REL));
}

#[test]
fn cross_validated_maps_match_manual_folds() {
    let ds = synthetic(10, 10, 4);
    let all = ds.all_indices();
    let opts = PriorOptions { folds: 4, n_bs: 3, use_cv: true };
    let s = 21;
    let maps = bootstrap_mean_maps(&gmm(), &ds, &all, &opts, s).unwrap();
    let folds = stratified_folds(&ds, &all, 4, seed::derive(s, &[tag::FOLDS])).unwrap();
    for (f, held) in folds.iter().enumerate() {
        // models see only the complement of the fold
        let train = complement(&all, held);
        assert!(held.iter().all(|i| !train.contains(i)));
        let ens = BootstrapEnsemble::train(&gmm(), &ds, &train, 3, seed::derive(s, &[tag::ENSEMBLE, f as u64])).unwrap();
        for &i in held {
            assert_eq!(maps[i], ens.mean_map(&ds.sample(i).measurements));
        }
    }
}

#[test]
fn prior_without_cv_uses_full_set_replicates() {
    let ds = synthetic(6, 6, 8);
    let g = build_grid_graph(40, 40);
    let opts = PriorOptions { folds: 5, n_bs: 4, use_cv: false };
    let p = estimate_prior_params(&gmm(), &ds, &g, &opts, 2).unwrap();
    let ens = BootstrapEnsemble::train(&gmm(), &ds, &ds.all_indices(), 4, seed::derive(2, &[tag::ENSEMBLE])).unwrap();
    let maps: Vec<Vec<f64>> = ds.samples().iter().map(|s| ens.mean_map(&s.measurements)).collect();
    assert_eq!(p, prior_from_mean_maps(&maps, &g).unwrap());
    assert_eq!(p.edge_var.len(), g.edge_count());
    assert!(p.node_var.iter().all(|&v| v > 0.0));
}

#[test]
fn prior_is_deterministic() {
    let ds = synthetic(8, 8, 3);
    let g = build_grid_graph(40, 40);
    let opts = PriorOptions { folds: 3, n_bs: 3, use_cv: true };
    let a = estimate_prior_params(&gmm(), &ds, &g, &opts, 5).unwrap();
    let b = estimate_prior_params(&gmm(), &ds, &g, &opts, 5).unwrap();
    assert_eq!(a, b);
}
