//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line on stderr
//! (bypassing test output capture) and the test fails if any criterion does.
//!
//! The benchmark criteria share one scaled run: 50×50 images, 100 controls
//! and 100 cases per effect size, 20 bootstrap replicates, two shuffles of
//! 5-fold CV, ew-GMM.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{dense_solution, random_instance, relative_error, spread};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsm_core::classifiers::{tune_regularization, ClassifierKind, ClassifierSpec};
use rsm_core::estimation::{complement, stratified_folds};
use rsm_core::evaluation::{run_experiment, ExperimentConfig, ExperimentReport, Method};
use rsm_core::pipeline::TrainedRsm;
use rsm_core::reconstruct::{reconstruct_map, PairwiseMode, RsmConfig};
use rsm_core::synth::{generate_dataset, SynthConfig};
use rsm_core::thresholding::{exceedance_rate, golden_section_threshold, threshold_from_values};
use rsm_core::{build_grid_graph, seed};

fn report(id: u32, pass: bool, detail: impl AsRef<str>) -> bool {
    let line = format!(
        "acceptance criterion {id}: {} | {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn note(text: impl AsRef<str>) {
    let _ = std::io::stderr().write_all(format!("  note: {}\n", text.as_ref()).as_bytes());
}

const LAMBDAS: [f64; 3] = [1.0, 2.5, 5.0];
const MODES: [PairwiseMode; 2] = [PairwiseMode::Nonstationary, PairwiseMode::Stationary];
const EFFECTS: [f64; 3] = [1.0, 1.4, 2.0];
const LIMITS: [f64; 2] = [0.01, 0.001];

fn scaled_synth() -> SynthConfig {
    SynthConfig {
        width: 50,
        height: 50,
        n_controls: 100,
        n_cases: 100,
        ..SynthConfig::default()
    }
}

fn scaled_config() -> ExperimentConfig {
    ExperimentConfig {
        synth: scaled_synth(),
        effect_sizes: EFFECTS.to_vec(),
        methods: Method::ALL.to_vec(),
        classifiers: vec![ClassifierKind::EwGmm],
        lambdas: LAMBDAS.to_vec(),
        l_fprs: LIMITS.to_vec(),
        pairwise_modes: MODES.to_vec(),
        shuffles: 2,
        folds: 5,
        n_bs: 20,
        prior_folds: 5,
        threshold_folds: 5,
        seed: 0,
        ..ExperimentConfig::default()
    }
}

#[test]
fn solver_matches_dense_direct_solve() {
    let mut worst: f64 = 0.0;
    for s in 0..200u64 {
        let inst = random_instance(10_000 + s, 5, 100);
        let lambda = [0.0, 0.5, 2.0][s as usize % 3];
        let got = reconstruct_map(&inst.observed, &inst.sigma2, &inst.prior, lambda, &inst.graph, PairwiseMode::Nonstationary).unwrap();
        let want = dense_solution(&inst, lambda, PairwiseMode::Nonstationary);
        worst = worst.max(relative_error(&got.values, &want));
    }
    assert!(report(1, worst <= 1e-8, format!("200 instances, worst relative error {worst:.2e} (limit 1e-8)")));
}

#[test]
fn map_limits() {
    let mut pinned_exact = true;
    let mut unary_err: f64 = 0.0;
    let mut monotone = true;
    let mut heterogeneous_rises = 0;
    let lambdas = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0];
    for s in 0..50u64 {
        let inst = random_instance(20_000 + s, 5, 100);
        let zero = vec![0.0; inst.sigma2.len()];
        let pinned = reconstruct_map(&inst.observed, &zero, &inst.prior, 2.0, &inst.graph, PairwiseMode::Nonstationary).unwrap();
        pinned_exact &= pinned.values == inst.observed;

        let unary = reconstruct_map(&inst.observed, &inst.sigma2, &inst.prior, 0.0, &inst.graph, PairwiseMode::Nonstationary).unwrap();
        for j in 0..inst.observed.len() {
            let want = inst.observed[j] / (1.0 + inst.sigma2[j] / inst.prior.node_var[j]);
            unary_err = unary_err.max((unary.values[j] - want).abs());
        }

        // spread shrinks with λ when the unary weight 1/σ² + 1/ϱ_j is the
        // same at every node (each Laplacian mode scales by c/(c+λμ));
        // with heterogeneous noise it need not, so that case is only counted
        let sweep = |s2: &[f64], prior: &rsm_core::estimation::PriorParams| -> Vec<f64> {
            lambdas
                .iter()
                .map(|&l| spread(&reconstruct_map(&inst.observed, s2, prior, l, &inst.graph, PairwiseMode::Nonstationary).unwrap().values))
                .collect()
        };
        let mut uniform = inst.prior.clone();
        uniform.node_var.iter_mut().for_each(|v| *v = inst.prior.node_var[0]);
        let s2 = vec![inst.sigma2[0]; inst.sigma2.len()];
        monotone &= sweep(&s2, &uniform).windows(2).all(|w| w[1] < w[0]);
        if !sweep(&inst.sigma2, &inst.prior).windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)) {
            heterogeneous_rises += 1;
        }
    }
    note(format!("recorded: {heterogeneous_rises} of 50 instances with node-varying noise show a spread increase somewhere along the sweep"));
    let pass = pinned_exact && unary_err <= 1e-10 && monotone;
    assert!(report(
        2,
        pass,
        format!("zero noise pins exactly: {pinned_exact}; unary-only max error {unary_err:.1e}; spread strictly decreasing in lambda under uniform unary weight: {monotone}")
    ));
}

#[test]
fn threshold_is_minimal_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut ok = true;
    let mut gs_ok = true;
    for _ in 0..100 {
        let m = rng.random_range(1..400);
        let ties = rng.random_bool(0.3);
        let values: Vec<f64> = (0..m)
            .map(|_| {
                let v: f64 = rng.random_range(-5.0..5.0);
                if ties { v.round() } else { v }
            })
            .collect();
        let l = [0.001, 0.01, 0.05, 0.2, 0.5][rng.random_range(0..5)];
        let tau = threshold_from_values(&values, l).unwrap();
        let mut candidates = values.clone();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let brute = candidates.iter().copied().find(|&t| exceedance_rate(&values, t) <= l).unwrap();
        ok &= tau == brute;
        let next = candidates.iter().copied().find(|&v| v > tau).unwrap_or(f64::INFINITY);
        let gs = golden_section_threshold(&values, l, 1e-9).unwrap();
        gs_ok &= gs >= tau && gs < next.min(tau + 1e-6) && exceedance_rate(&values, gs) <= l;
    }
    assert!(report(
        3,
        ok && gs_ok,
        format!("100 pooled sets: sort equals brute force {ok}; golden section within one gap {gs_ok}")
    ));
}

#[test]
fn unary_only_differs_from_wbs() {
    let synth = generate_dataset(&SynthConfig { effect_size: 2.0, seed: 5, ..scaled_synth() }).unwrap();
    let ds = &synth.dataset;
    let graph = build_grid_graph(50, 50);
    let all = ds.all_indices();
    let held = &stratified_folds(ds, &all, 5, 8).unwrap()[0];
    let config = RsmConfig { n_bs: 20, pairwise_mode: PairwiseMode::None, seed: 12, ..RsmConfig::default() };
    let model = TrainedRsm::fit(&ClassifierSpec::new(ClassifierKind::EwGmm, 1.0), ds, &complement(&all, held), &graph, &config).unwrap();
    let (mut differ, mut total) = (0usize, 0usize);
    for &i in held {
        let rsm = model.reconstruct(ds.sample(i), &graph).unwrap();
        let wbs = model.noise(ds.sample(i)).unwrap().mean_map;
        for j in 0..rsm.len() {
            if model.prior.node_var[j].is_finite() {
                total += 1;
                differ += usize::from(rsm.values[j] != wbs.values[j]);
            }
        }
    }
    let frac = differ as f64 / total as f64;
    assert!(report(8, frac >= 0.99, format!("{differ}/{total} node values differ ({:.4}, need >= 0.99) over {} held-out samples", frac, held.len())));
}

fn row(r: &ExperimentReport, e: f64, m: Method, mode: PairwiseMode, lambda: f64, l: f64) -> (f64, f64) {
    let s = r
        .find(e, m, ClassifierKind::EwGmm, mode, lambda, l)
        .unwrap_or_else(|| panic!("missing row {e} {m:?} {mode:?} {lambda} {l}"));
    (s.mean_dsc, s.mean_fpr)
}

const NS: PairwiseMode = PairwiseMode::Nonstationary;

fn print_table(r: &ExperimentReport) {
    for &l in &LIMITS {
        for &e in &EFFECTS {
            let mut parts = Vec::new();
            for m in [Method::Nbs, Method::Wbs, Method::Outlier] {
                let (d, f) = row(r, e, m, NS, 1.0, l);
                parts.push(format!("{} {d:.3}/{f:.4}", m.name()));
            }
            for &mode in &MODES {
                for &lambda in &LAMBDAS {
                    let (d, f) = row(r, e, Method::Rsm, mode, lambda, l);
                    let tag = if mode == NS { "ns" } else { "st" };
                    parts.push(format!("rsm-{tag}-{lambda} {d:.3}/{f:.4}"));
                }
            }
            note(format!("l_fpr {l} effect {e} (dsc/fpr): {}", parts.join(", ")));
        }
    }
}

fn fpr_control(r: &ExperimentReport) -> bool {
    let mut worst: f64 = 0.0;
    for &e in &EFFECTS {
        for &mode in &MODES {
            for &lambda in &LAMBDAS {
                worst = worst.max(row(r, e, Method::Rsm, mode, lambda, 0.01).1);
            }
        }
    }
    let mut loose: f64 = 0.0;
    for &e in &EFFECTS {
        for &mode in &MODES {
            for &lambda in &LAMBDAS {
                loose = loose.max(row(r, e, Method::Rsm, mode, lambda, 0.001).1);
            }
        }
    }
    note(format!("recorded: worst RSM FPR at l_fpr 0.001 is {loose:.5}"));
    report(4, worst <= 0.015, format!("worst mean RSM control FPR at l_fpr 0.01 over all effects, modes and lambdas: {worst:.5} (limit 0.015)"))
}

fn rsm_beats_wbs(r: &ExperimentReport) -> bool {
    let mut min_margin = f64::INFINITY;
    let mut parts = Vec::new();
    for &e in &[1.4, 2.0] {
        for &lambda in &[1.0, 2.5] {
            for &l in &LIMITS {
                let margin = row(r, e, Method::Rsm, NS, lambda, l).0 - row(r, e, Method::Wbs, NS, lambda, l).0;
                min_margin = min_margin.min(margin);
                parts.push(format!("e{e}/lambda{lambda}/l{l}: {margin:+.3}"));
            }
        }
    }
    report(5, min_margin >= 0.02, format!("RSM minus WBS DSC, smallest margin {min_margin:.3} (need >= 0.02); {}", parts.join(", ")))
}

fn monotone_in_effect(r: &ExperimentReport) -> bool {
    let mut broken = Vec::new();
    let mut checked = 0;
    for s in r.summary.iter().filter(|s| s.effect_size == 1.0) {
        let at = |e: f64| r.find(e, s.method, s.classifier, s.pairwise_mode, s.lambda, s.l_fpr).unwrap().mean_dsc;
        let (a, b, c) = (at(1.0), at(1.4), at(2.0));
        checked += 1;
        if !(c > b && b > a) {
            broken.push(format!("{} {:?} lambda {} l {}: {a:.3} {b:.3} {c:.3}", s.method.name(), s.pairwise_mode, s.lambda, s.l_fpr));
        }
    }
    report(
        6,
        broken.is_empty(),
        format!("{} of {checked} method configurations strictly increase with effect size{}", checked - broken.len(), if broken.is_empty() { String::new() } else { format!("; violations: {}", broken.join("; ")) }),
    )
}

fn outlier_is_weaker(r: &ExperimentReport) -> bool {
    let (d, f) = row(r, 2.0, Method::Outlier, NS, 1.0, 0.01);
    let best_below = LAMBDAS.iter().map(|&lambda| row(r, 2.0, Method::Rsm, NS, lambda, 0.01).0).fold(f64::INFINITY, f64::min);
    let pass = (0.25..=0.60).contains(&d) && d < best_below && f <= 0.015;
    report(7, pass, format!("outlier DSC {d:.3} (range 0.25..0.60), lowest ew-GMM RSM DSC {best_below:.3}, outlier FPR {f:.4} (limit 0.015)"))
}

fn nonstationary_wins(r: &ExperimentReport) -> bool {
    let mut pass = true;
    let mut parts = Vec::new();
    for &l in &LIMITS {
        let ns = row(r, 2.0, Method::Rsm, NS, 5.0, l).0;
        let st = row(r, 2.0, Method::Rsm, PairwiseMode::Stationary, 5.0, l).0;
        pass &= ns >= st;
        parts.push(format!("l_fpr {l}: nonstationary {ns:.3} vs stationary {st:.3}"));
    }
    report(9, pass, parts.join(", "))
}

/// LR-L1 under RSM versus WBS on a reduced configuration (recorded only).
fn lasso_record() {
    let synth_cfg = SynthConfig { effect_size: 2.0, seed: seed::derive(0, &[seed::tag::SAMPLE]), ..scaled_synth() };
    let synth = generate_dataset(&synth_cfg).unwrap();
    let eta = tune_regularization(&synth.dataset, ClassifierKind::LogregL1, 5, 1).unwrap();
    let config = ExperimentConfig {
        effect_sizes: vec![2.0],
        classifiers: vec![ClassifierKind::LogregL1],
        methods: vec![Method::Wbs, Method::Rsm],
        lambdas: vec![1.0, 2.5],
        l_fprs: vec![0.01],
        pairwise_modes: vec![NS],
        shuffles: 1,
        n_bs: 10,
        prior_cv: false,
        threshold_folds: 2,
        eta: Some(eta),
        ..scaled_config()
    };
    let r = run_experiment(&config).unwrap();
    let get = |m: Method, lambda: f64| r.find(2.0, m, ClassifierKind::LogregL1, NS, lambda, 0.01).unwrap().mean_dsc;
    note(format!(
        "recorded: LR-L1 (eta {eta:.3}) effect 2.0 l_fpr 0.01: WBS {:.3}, RSM lambda 1 {:.3}, RSM lambda 2.5 {:.3}",
        get(Method::Wbs, 1.0),
        get(Method::Rsm, 1.0),
        get(Method::Rsm, 2.5)
    ));
}

#[test]
fn scaled_benchmark() {
    let config = scaled_config();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let start = Instant::now();
    let first = wide.install(|| run_experiment(&config)).unwrap();
    note(format!("scaled run took {:.0} s", start.elapsed().as_secs_f64()));
    print_table(&first);
    let results = [
        fpr_control(&first),
        rsm_beats_wbs(&first),
        monotone_in_effect(&first),
        outlier_is_weaker(&first),
        nonstationary_wins(&first),
    ];
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let second = serial.install(|| run_experiment(&config)).unwrap();
    note(format!("serial rerun took {:.0} s", start.elapsed().as_secs_f64()));
    let same = first.records_csv() == second.records_csv() && first.summary_csv() == second.summary_csv();
    let det = report(10, same, format!("rerun with 1 thread instead of 4: report CSVs byte-identical {same}"));
    let start = Instant::now();
    lasso_record();
    note(format!("LR-L1 record took {:.0} s", start.elapsed().as_secs_f64()));
    let failed: Vec<u32> = [4, 5, 6, 7, 9]
        .into_iter()
        .zip(results)
        .filter(|(_, ok)| !ok)
        .map(|(id, _)| id)
        .chain((!det).then_some(10))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
