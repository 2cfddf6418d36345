#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsm_core::estimation::PriorParams;
use rsm_core::graph::NeighborhoodGraph;
use rsm_core::reconstruct::PairwiseMode;

/// Random MAP problem on a random graph.
pub struct Instance {
    pub graph: NeighborhoodGraph,
    pub observed: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub prior: PriorParams,
}

pub fn random_instance(seed: u64, min_nodes: usize, max_nodes: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(min_nodes..=max_nodes);
    let p_edge = rng.random_range(0.02..0.3);
    let mut pairs = Vec::new();
    // spanning chain plus random extra edges
    for j in 1..d {
        pairs.push((rng.random_range(0..j), j));
    }
    for j in 0..d {
        for k in j + 1..d {
            if rng.random::<f64>() < p_edge && !pairs.contains(&(j, k)) {
                pairs.push((j, k));
            }
        }
    }
    let graph = NeighborhoodGraph::new(d, pairs).unwrap();
    let pos = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-2.0..1.0));
    let node_var: Vec<f64> = (0..d).map(|_| pos(&mut rng)).collect();
    let edge_var: Vec<f64> = (0..graph.edge_count()).map(|_| pos(&mut rng)).collect();
    let stationary = edge_var.iter().sum::<f64>() / edge_var.len().max(1) as f64;
    Instance {
        observed: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
        sigma2: (0..d).map(|_| pos(&mut rng)).collect(),
        prior: PriorParams {
            node_var,
            edge_mean: vec![0.0; edge_var.len()],
            edge_var,
            stationary_var: Some(stationary),
            mean_of_means: vec![0.0; d],
        },
        graph,
    }
}

/// Dense solve of the symmetrized system, assembled from the definitions.
pub fn dense_solution(inst: &Instance, lambda: f64, mode: PairwiseMode) -> Vec<f64> {
    let d = inst.graph.node_count();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for j in 0..d {
        a[(j, j)] = 1.0 / inst.sigma2[j] + 1.0 / inst.prior.node_var[j];
        b[j] = inst.observed[j] / inst.sigma2[j];
    }
    if mode != PairwiseMode::None {
        for (e, &(j, k)) in inst.graph.edges().iter().enumerate() {
            let v = match mode {
                PairwiseMode::Stationary => inst.prior.stationary_var.unwrap(),
                _ => inst.prior.edge_var[e],
            };
            let w = lambda / v;
            a[(j, j)] += w;
            a[(k, k)] += w;
            a[(j, k)] -= w;
            a[(k, j)] -= w;
        }
    }
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

pub fn relative_error(x: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Population variance of a map across nodes.
pub fn spread(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}
