use proptest::prelude::*;
use rsm_core::classifiers::{ClassifierKind, ClassifierSpec};
use rsm_core::estimation::{complement, stratified_folds};
use rsm_core::pipeline::TrainedRsm;
use rsm_core::reconstruct::RsmConfig;
use rsm_core::seed::{self, tag};
use rsm_core::synth::{generate_dataset, SynthConfig};
use rsm_core::thresholding::{
    compute_threshold, cv_threshold, exceedance_rate, golden_section_threshold,
    threshold_from_values, threshold_map,
};
use rsm_core::{build_grid_graph, EffectMap, MapRole};

/// Smallest candidate t (pooled values and one point below them) meeting
/// the exceedance limit, by exhaustive scan.
fn brute_force(values: &[f64], l: f64) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = f64::INFINITY;
    for &t in values.iter().chain([min - 1.0].iter()) {
        let count = values.iter().filter(|&&v| v > t).count();
        if count as f64 / values.len() as f64 <= l && t < best {
            best = t;
        }
    }
    best
}

proptest! {
    #[test]
    fn sort_method_is_minimal_feasible(values in prop::collection::vec(-100i32..100, 1..300), l in 0.001f64..0.9) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64 * 0.25).collect();
        let tau = threshold_from_values(&v, l).unwrap();
        prop_assert_eq!(tau, brute_force(&v, l));
        prop_assert!(exceedance_rate(&v, tau) <= l);
    }

    #[test]
    fn golden_section_within_one_gap(values in prop::collection::vec(-1e3f64..1e3, 2..200), l in 0.001f64..0.9) {
        let tau = threshold_from_values(&values, l).unwrap();
        let gs = golden_section_threshold(&values, l, 1e-9).unwrap();
        let next = values.iter().copied().filter(|&v| v > tau).fold(f64::INFINITY, f64::min);
        prop_assert!(gs >= tau - 1e-9);
        prop_assert!(gs <= next || next.is_infinite());
        prop_assert!(exceedance_rate(&values, gs) <= l);
    }

    #[test]
    fn tighter_limit_never_lowers_tau(values in prop::collection::vec(-50f64..50.0, 1..200), a in 0.001f64..0.99, b in 0.001f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(threshold_from_values(&values, lo).unwrap() >= threshold_from_values(&values, hi).unwrap());
    }

    #[test]
    fn raising_tau_never_adds_detections(values in prop::collection::vec(-5f64..5.0, 1..100), t in -5f64..5.0, dt in 0f64..3.0) {
        let m = EffectMap::new(values, MapRole::Reconstructed);
        let (q1, q2) = (threshold_map(&m, t), threshold_map(&m, t + dt));
        for (a, b) in q1.detections.iter().zip(&q2.detections) {
            prop_assert!(*a || !*b);
        }
        prop_assert_eq!(threshold_map(&m, t), q1);
    }
}

#[test]
fn pooled_maps_use_all_values() {
    let maps: Vec<EffectMap> = (0..4)
        .map(|n| EffectMap::new((0..50).map(|j| (n * 50 + j) as f64).collect(), MapRole::Reconstructed))
        .collect();
    let t = compute_threshold(&maps, 0.01).unwrap();
    // 200 pooled values 0..199, two may exceed
    assert_eq!(t.tau, 197.0);
    assert_eq!(t.n_control_maps, 4);
}

#[test]
fn two_fold_threshold_matches_manual_chaining() {
    let synth = generate_dataset(&SynthConfig {
        width: 40,
        height: 40,
        n_controls: 10,
        n_cases: 10,
        effect_size: 2.0,
        seed: 77,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = &synth.dataset;
    let g = build_grid_graph(40, 40);
    let spec = ClassifierSpec::new(ClassifierKind::EwGmm, 1.0);
    let config = RsmConfig { folds: 2, n_bs: 4, l_fpr: 0.02, seed: 5, ..RsmConfig::default() };
    let t = cv_threshold(&spec, ds, &g, &config).unwrap();
    assert_eq!(t, cv_threshold(&spec, ds, &g, &config).unwrap());

    let all = ds.all_indices();
    let folds = stratified_folds(ds, &all, 2, seed::derive(5, &[tag::THRESHOLD])).unwrap();
    let mut maps = Vec::new();
    for (f, held) in folds.iter().enumerate() {
        let inner = RsmConfig { seed: seed::derive(5, &[tag::THRESHOLD, f as u64]), ..config.clone() };
        let m = TrainedRsm::fit(&spec, ds, &complement(&all, held), &g, &inner).unwrap();
        for &i in held.iter().filter(|&&i| !ds.label(i).is_case()) {
            maps.push(m.reconstruct(ds.sample(i), &g).unwrap());
        }
    }
    assert_eq!(maps.len(), 10);
    let manual = compute_threshold(&maps, 0.02).unwrap();
    assert_eq!(t, manual);
    let pooled: Vec<f64> = maps.iter().flat_map(|m| m.values.iter().copied()).collect();
    assert!(exceedance_rate(&pooled, t.tau) <= 0.02);

    let trained = TrainedRsm::fit(&spec, ds, &all, &g, &config).unwrap();
    assert!(trained.detect(ds.sample(0), &g).is_err());
    let q = trained.with_threshold(t).detect(ds.sample(15), &g).unwrap();
    assert_eq!(q.len(), 1600);
}

#[test]
fn too_few_controls_for_folds() {
    let synth = generate_dataset(&SynthConfig {
        width: 40,
        height: 40,
        n_controls: 3,
        n_cases: 6,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let config = RsmConfig { folds: 5, n_bs: 2, ..RsmConfig::default() };
    let spec = ClassifierSpec::new(ClassifierKind::EwGmm, 1.0);
    assert!(cv_threshold(&spec, &synth.dataset, &build_grid_graph(40, 40), &config).is_err());
}
