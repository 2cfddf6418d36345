//! Soft-margin linear SVM with an unpenalized intercept:
//!
//! min ½‖w‖² + η Σ ξ_n  s.t.  y_n(w·x_n + b) ≥ 1 − ξ_n, ξ_n ≥ 0
//!
//! solved in the dual by SMO with second-order working-set selection
//! (Fan, Chen & Lin 2005) on a precomputed linear kernel.

use super::design::{dot, Design};
use super::{LinearKind, LinearModel, SolverOptions};
use crate::error::{Result, RsmError};
use crate::types::Dataset;

const TAU: f64 = 1e-12;

struct Smo<'a> {
    kernel: Vec<f64>,
    n: usize,
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    /// Returns the working pair and the current maximal KKT violation.
    fn select(&self) -> (Option<(usize, usize)>, f64) {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..self.n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            return (None, 0.0);
        };
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..self.n {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.y[t] * self.grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let mut a = self.k(i, i) + self.k(t, t) - 2.0 * self.k(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        (j_sel.map(|j| (i, j)), gmax - gmin)
    }

    fn update(&mut self, i: usize, j: usize) {
        let (yi, yj, c) = (self.y[i], self.y[j], self.c);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let mut quad = self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.n {
            // Q_it = y_i y_t K_it
            self.grad[t] += self.y[t] * (yi * self.k(i, t) * di + yj * self.k(j, t) * dj);
        }
    }

    /// Intercept minimizing the primal for the current w, plus primal and
    /// dual objective values. Uses w·x_t = y_t (G_t + 1).
    fn objectives(&self) -> (f64, f64, f64) {
        let ww: f64 = self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g + 1.0))
            .sum();
        let hinge = |b: f64| -> f64 {
            (0..self.n)
                .map(|t| (-self.grad[t] - self.y[t] * b).max(0.0))
                .sum()
        };
        let mut best_b = self.libsvm_intercept();
        let mut best = hinge(best_b);
        for t in 0..self.n {
            let b = -self.y[t] * self.grad[t];
            let h = hinge(b);
            if h < best {
                best = h;
                best_b = b;
            }
        }
        let primal = 0.5 * ww + self.c * best;
        let dual = self.alpha.iter().sum::<f64>() - 0.5 * ww;
        (best_b, primal, dual)
    }

    fn libsvm_intercept(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..self.n {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        let rho = if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }
}

pub(crate) fn fit_svm(
    dataset: &Dataset,
    indices: &[usize],
    eta: f64,
    opts: &SolverOptions,
) -> Result<LinearModel> {
    dataset.require_both_classes(indices)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(RsmError::Config(format!("SVM eta must be positive, got {eta}")));
    }
    let design = Design::new(dataset, indices);
    let n = design.n;
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(design.row(i), design.row(j));
            kernel[i * n + j] = v;
            kernel[j * n + i] = v;
        }
    }
    let mut smo = Smo {
        kernel,
        n,
        y: &design.ypm,
        c: eta,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
    };
    let check_every = n.max(10);
    let mut last = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let mut iter = 0;
    let converged = loop {
        let (pair, violation) = smo.select();
        let stalled = pair.is_none() || violation <= 1e-15 * (1.0 + eta);
        if stalled || iter % check_every == 0 {
            last = smo.objectives();
            let (_, primal, dual) = last;
            if primal - dual <= opts.tol * primal.abs().max(1.0) {
                break true;
            }
            if stalled {
                break false;
            }
        }
        if iter >= opts.max_iter {
            break false;
        }
        let (i, j) = pair.expect("checked above");
        smo.update(i, j);
        iter += 1;
    };
    let (b, primal, dual) = last;
    if !converged {
        return Err(RsmError::Training(format!(
            "SVM did not converge in {iter} iterations (duality gap {:.3e}, primal {primal:.6e})",
            primal - dual
        )));
    }
    let coef: Vec<f64> = smo
        .alpha
        .iter()
        .zip(&design.ypm)
        .map(|(a, y)| a * y)
        .collect();
    let w = design.transpose_times(&coef);
    Ok(LinearModel {
        w,
        b,
        kind: LinearKind::Svm,
        eta,
    })
}

pub fn train_linear_svm(dataset: &Dataset, eta: f64) -> Result<LinearModel> {
    fit_svm(dataset, &dataset.all_indices(), eta, &SolverOptions::default())
}

/// ½‖w‖² + η Σ max(0, 1 − y(w·x + b)) with y ∈ {−1, +1}.
pub fn svm_objective(model: &LinearModel, dataset: &Dataset) -> f64 {
    let hinge: f64 = dataset
        .samples()
        .iter()
        .map(|s| {
            let y = if s.label.is_case() { 1.0 } else { -1.0 };
            (1.0 - y * (dot(&model.w, &s.measurements) + model.b)).max(0.0)
        })
        .sum();
    0.5 * dot(&model.w, &model.w) + model.eta * hinge
}
