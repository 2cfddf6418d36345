//! MAP reconstruction under the Gaussian MRF prior.
//!
//! Row j of the stationarity condition,
//!
//! (σ_j²/ϱ_j + 1) ρ_j + σ_j² λ Σ_{k∈N(j)} (ρ_j − ρ_k)/ϱ_jk = ρ̂_j,
//!
//! divided by σ_j² gives a symmetric positive definite system
//! `A ρ = ρ̂/σ²` with
//! `A_jj = 1/σ_j² + 1/ϱ_j + λ Σ_k 1/ϱ_jk` and `A_jk = −λ/ϱ_jk` on edges.
//! Nodes with σ_j = 0 are pinned at ρ̂_j and moved to the right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, RsmError};
use crate::estimation::PriorParams;
use crate::graph::NeighborhoodGraph;
use crate::types::{EffectMap, MapRole};

/// Relative floor for nonzero σ² (relative to the largest σ²).
pub const SIGMA2_FLOOR_REL: f64 = 1e-12;
/// Relative residual the solver aims for; the contract is 1e-8.
pub const SOLVER_TARGET: f64 = 1e-12;
pub const SOLVER_CONTRACT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseMode {
    /// Per-edge ϱ_jk.
    Nonstationary,
    /// One ϱ for every edge.
    Stationary,
    /// Unary term only.
    None,
}

/// Which map is fed to the solve as the observation ρ̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Map of the single classifier trained on the full training set.
    Single,
    /// Bootstrap-average map ρ̄.
    BootstrapMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsmConfig {
    pub lambda: f64,
    pub l_fpr: f64,
    pub n_bs: usize,
    pub folds: usize,
    pub pairwise_mode: PairwiseMode,
    pub observation: Observation,
    /// Cross-validated prior estimation; `false` maps the training set with
    /// replicates trained on the whole set.
    pub prior_cv: bool,
    pub seed: u64,
}

impl Default for RsmConfig {
    fn default() -> Self {
        RsmConfig {
            lambda: 2.0,
            l_fpr: 0.01,
            n_bs: 100,
            folds: 5,
            pairwise_mode: PairwiseMode::Nonstationary,
            observation: Observation::Single,
            prior_cv: true,
            seed: 0,
        }
    }
}

impl RsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RsmError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.l_fpr > 0.0 && self.l_fpr < 1.0) {
            return Err(RsmError::Config(format!("l_fpr must lie in (0,1), got {}", self.l_fpr)));
        }
        if self.n_bs < 2 {
            return Err(RsmError::Config("n_bs must be at least 2".into()));
        }
        if self.folds < 2 {
            return Err(RsmError::Config("folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Sparse symmetric system over the free (σ > 0) nodes, kept in Laplacian
/// form: `(A x)_r = unary_r x_r + Σ_c w_rc (x_r − x_c)`. Edges to pinned
/// nodes are folded into `unary` and `rhs`. Evaluating differences rather
/// than `A_rr x_r − w x_c` keeps products accurate when a floored edge
/// variance makes `w` huge.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSystem {
    pub node_count: usize,
    /// Free node of each system row.
    pub free_nodes: Vec<usize>,
    /// Pinned value per node, `None` for free nodes.
    pub pinned: Vec<Option<f64>>,
    pub unary: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub weights: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl MapSystem {
    pub fn dim(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let xr = x[r];
            let mut acc = self.unary[r] * xr;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.weights[p] * (xr - x[self.col_idx[p]]);
            }
            *o = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|r| self.unary[r] + self.weights[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum::<f64>())
            .collect()
    }

    /// Dense copy of A, row-major, for small-instance checks.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        let diag = self.diagonal();
        for r in 0..n {
            a[r * n + r] = diag[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                a[r * n + self.col_idx[p]] -= self.weights[p];
            }
        }
        a
    }

    /// Scatters a solution over the free nodes back to a full map.
    pub fn expand(&self, free_solution: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
        for (r, &j) in self.free_nodes.iter().enumerate() {
            out[j] = free_solution[r];
        }
        out
    }
}

/// Edge weights 1/ϱ_jk for the chosen pairwise mode.
fn edge_weights(prior: &PriorParams, graph: &NeighborhoodGraph, mode: PairwiseMode) -> Result<Vec<f64>> {
    match mode {
        PairwiseMode::None => Ok(vec![0.0; graph.edge_count()]),
        PairwiseMode::Nonstationary => {
            check_dim(graph.edge_count(), prior.edge_var.len())?;
            Ok(prior.edge_var.iter().map(|v| 1.0 / v).collect())
        }
        PairwiseMode::Stationary => {
            let s = match prior.stationary_var {
                Some(s) => s,
                None => crate::estimation::stationary_variance(prior, graph)?,
            };
            Ok(vec![1.0 / s; graph.edge_count()])
        }
    }
}

pub fn assemble_system(
    observed: &[f64],
    sigma2: &[f64],
    prior: &PriorParams,
    lambda: f64,
    graph: &NeighborhoodGraph,
    mode: PairwiseMode,
) -> Result<MapSystem> {
    let d = graph.node_count();
    check_dim(d, observed.len())?;
    check_dim(d, sigma2.len())?;
    check_dim(d, prior.node_var.len())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(RsmError::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if let Some(j) = sigma2.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(RsmError::Data(format!("sigma^2 at node {j} is negative or not finite")));
    }
    assert!(
        prior.node_var.iter().chain(&prior.edge_var).all(|&v| v > 0.0),
        "prior variances must be positive after flooring"
    );
    let weights = edge_weights(prior, graph, mode)?;
    let max_s2 = sigma2.iter().copied().fold(0.0, f64::max);
    let s2_floor = SIGMA2_FLOOR_REL * max_s2;

    let mut row_of = vec![usize::MAX; d];
    let mut free_nodes = Vec::new();
    let mut pinned = vec![None; d];
    for j in 0..d {
        if sigma2[j] > 0.0 {
            row_of[j] = free_nodes.len();
            free_nodes.push(j);
        } else {
            pinned[j] = Some(observed[j]);
        }
    }

    let mut row_ptr = Vec::with_capacity(free_nodes.len() + 1);
    let mut col_idx = Vec::new();
    let mut edge_w = Vec::new();
    let mut unary = Vec::with_capacity(free_nodes.len());
    let mut rhs = Vec::with_capacity(free_nodes.len());
    row_ptr.push(0);
    for &j in &free_nodes {
        let inv_s2 = 1.0 / sigma2[j].max(s2_floor);
        let mut u = inv_s2 + 1.0 / prior.node_var[j];
        let mut b = observed[j] * inv_s2;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for &(k, e) in graph.neighbors(j) {
            let wjk = lambda * weights[e];
            if wjk == 0.0 {
                continue;
            }
            match pinned[k] {
                Some(v) => {
                    u += wjk;
                    b += wjk * v;
                }
                None => entries.push((row_of[k], wjk)),
            }
        }
        entries.sort_by_key(|&(c, _)| c);
        for (c, w) in entries {
            col_idx.push(c);
            edge_w.push(w);
        }
        row_ptr.push(col_idx.len());
        unary.push(u);
        rhs.push(b);
    }
    Ok(MapSystem {
        node_count: d,
        free_nodes,
        pinned,
        unary,
        row_ptr,
        col_idx,
        weights: edge_w,
        rhs,
    })
}

/// Iteration count and final relative residual of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `n·b²` for which the banded factorization is used.
const BANDED_WORK_LIMIT: f64 = 2e9;
const REFINEMENT_STEPS: usize = 10;

impl MapSystem {
    /// `b − A x`.
    fn residual(&self, x: &[f64], r: &mut [f64]) {
        self.matvec(x, r);
        r.iter_mut().zip(&self.rhs).for_each(|(ri, bi)| *ri = bi - *ri);
    }

    /// Norm of `|A| |x|`, the scale of rounding error in `A x`.
    fn abs_product_norm(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|r| {
                let mut s = self.unary[r] * x[r].abs();
                for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.weights[p] * (x[r].abs() + x[self.col_idx[p]].abs());
                }
                s * s
            })
            .sum::<f64>()
            .sqrt()
    }

    fn bandwidth(&self) -> usize {
        (0..self.dim())
            .flat_map(|r| self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(move |&c| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }
}

/// Lower Cholesky factor in band storage: row `i` holds `L[i][i−b..=i]`.
struct BandCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn factor(system: &MapSystem) -> Option<Self> {
        let n = system.dim();
        let b = system.bandwidth();
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        let diag = system.diagonal();
        for r in 0..n {
            l[r * w + b] = diag[r];
            for p in system.row_ptr[r]..system.row_ptr[r + 1] {
                let c = system.col_idx[p];
                if c < r {
                    l[r * w + c + b - r] -= system.weights[p];
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let k0 = lo.max(j.saturating_sub(b));
                let mut s = l[i * w + j + b - i];
                for k in k0..j {
                    s -= l[i * w + k + b - i] * l[j * w + k + b - j];
                }
                if j == i {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * w + b] = s.sqrt();
                } else {
                    l[i * w + j + b - i] = s / l[j * w + b];
                }
            }
        }
        Some(BandCholesky { n, b, l })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l[i * w + k + b - i] * y[k];
            }
            y[i] = s / self.l[i * w + b];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + b + 1) {
                s -= self.l[k * w + i + b - k] * y[k];
            }
            y[i] = s / self.l[i * w + b];
        }
        y
    }
}

/// Banded Cholesky followed by iterative refinement; `None` if the
/// factorization breaks down.
fn solve_banded(system: &MapSystem) -> Option<(Vec<f64>, usize)> {
    let chol = BandCholesky::factor(system)?;
    let b_norm = dot(&system.rhs, &system.rhs).sqrt();
    let mut x = chol.solve(&system.rhs);
    let mut r = vec![0.0; x.len()];
    system.residual(&x, &mut r);
    let mut res = dot(&r, &r).sqrt();
    let mut steps = 0;
    while steps < REFINEMENT_STEPS && res > SOLVER_TARGET * b_norm {
        let dx = chol.solve(&r);
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        system.residual(&cand, &mut r);
        let cand_res = dot(&r, &r).sqrt();
        steps += 1;
        if cand_res >= res {
            break;
        }
        x = cand;
        res = cand_res;
    }
    Some((x, steps))
}

/// Jacobi-preconditioned conjugate gradients.
fn solve_pcg(system: &MapSystem) -> (Vec<f64>, usize) {
    let n = system.dim();
    let b = &system.rhs;
    let b_norm = dot(b, b).sqrt();
    let inv_diag: Vec<f64> = system.diagonal().iter().map(|d| 1.0 / d).collect();
    let max_iter = (10 * n).max(20);
    let mut x: Vec<f64> = b.iter().zip(&inv_diag).map(|(b, m)| b * m).collect();
    let mut r = vec![0.0; n];
    system.residual(&x, &mut r);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut best = (dot(&r, &r).sqrt() / b_norm, x.clone());
    let mut iterations = 0;
    while iterations < max_iter && best.0 > SOLVER_TARGET {
        system.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        // recompute the true residual now and then to avoid drift
        if iterations % 50 == 0 {
            system.residual(&x, &mut r);
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        if res < best.0 {
            best = (res, x.clone());
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (best.1, iterations)
}

/// Solves the free-node system. Band-limited systems (grids in raster
/// order) are factored directly; others go through Jacobi PCG.
///
/// The returned iterate satisfies `‖b − A x‖ ≤ 1e-8 ‖b‖`, or, when a
/// floored edge variance makes that unreachable in double precision, lies
/// within a small multiple of the rounding level `ε ‖|A| |x|‖`.
pub fn solve_system(system: &MapSystem) -> Result<(Vec<f64>, SolveStats)> {
    let n = system.dim();
    let b_norm = dot(&system.rhs, &system.rhs).sqrt();
    if n == 0 || b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let band = system.bandwidth() as f64;
    let direct = if n as f64 * band * band <= BANDED_WORK_LIMIT {
        solve_banded(system)
    } else {
        None
    };
    let (x, iterations) = match direct {
        Some(sol) => sol,
        None => solve_pcg(system),
    };
    let mut r = vec![0.0; n];
    system.residual(&x, &mut r);
    let res_abs = dot(&r, &r).sqrt();
    let res = res_abs / b_norm;
    let rounding = 16.0 * f64::EPSILON * system.abs_product_norm(&x);
    if res > SOLVER_CONTRACT && res_abs > rounding {
        return Err(RsmError::Solver {
            iterations,
            residual: res,
        });
    }
    Ok((
        x,
        SolveStats {
            iterations,
            relative_residual: res,
        },
    ))
}

/// Solves the assembled system and returns the full reconstructed map.
pub fn solve_map(system: &MapSystem) -> Result<EffectMap> {
    let (x, _) = solve_system(system)?;
    Ok(EffectMap::new(system.expand(&x), MapRole::Reconstructed))
}

/// Assemble and solve in one step.
pub fn reconstruct_map(
    observed: &[f64],
    sigma2: &[f64],
    prior: &PriorParams,
    lambda: f64,
    graph: &NeighborhoodGraph,
    mode: PairwiseMode,
) -> Result<EffectMap> {
    solve_map(&assemble_system(observed, sigma2, prior, lambda, graph, mode)?)
}

/// Residuals of the unsymmetrized row equations for a full map `rho`.
pub fn row_equation_residuals(
    rho: &[f64],
    observed: &[f64],
    sigma2: &[f64],
    prior: &PriorParams,
    lambda: f64,
    graph: &NeighborhoodGraph,
    mode: PairwiseMode,
) -> Result<Vec<f64>> {
    let weights = edge_weights(prior, graph, mode)?;
    Ok((0..graph.node_count())
        .map(|j| {
            let pair: f64 = graph
                .neighbors(j)
                .iter()
                .map(|&(k, e)| weights[e] * (rho[j] - rho[k]))
                .sum();
            (sigma2[j] / prior.node_var[j] + 1.0) * rho[j] + sigma2[j] * lambda * pair
                - observed[j]
        })
        .collect())
}
