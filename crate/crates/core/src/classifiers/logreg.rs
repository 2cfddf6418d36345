//! Penalized logistic regression with an unpenalized intercept.
//!
//! L2: minimize Σ ℓ_n + (η/2)‖w‖², truncated Newton (CG inner solves) with
//! Armijo backtracking.
//! L1: minimize Σ ℓ_n + η‖w‖₁, coordinate descent with one-dimensional
//! Newton steps and soft-threshold directions (CDN), sweeping the active set
//! between full passes.

use super::design::{axpy, dot, norm, Design};
use super::{LinearKind, LinearModel, SolverOptions};
use crate::error::{Result, RsmError};
use crate::types::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    L1,
    L2,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood for margins `z = Xw + b`, labels in {0,1}.
fn loss(z: &[f64], y: &[f64]) -> f64 {
    z.iter()
        .zip(y)
        .map(|(&zi, &yi)| softplus(zi) - yi * zi)
        .sum()
}

/// Penalized negative log-likelihood of a fitted model on a dataset.
pub fn logreg_objective(model: &LinearModel, dataset: &Dataset) -> f64 {
    let design = Design::new(dataset, &dataset.all_indices());
    let z = design.margins(&model.w, model.b);
    let penalty = match model.kind {
        LinearKind::LogRegL1 => model.w.iter().map(|v| v.abs()).sum::<f64>(),
        _ => 0.5 * dot(&model.w, &model.w),
    };
    loss(&z, &design.y01) + model.eta * penalty
}

/// ‖∇ℓ(0, 0)‖, the scale for relative stopping rules.
fn origin_gradient_norm(design: &Design) -> f64 {
    let r: Vec<f64> = design.y01.iter().map(|&y| 0.5 - y).collect();
    let gw = design.transpose_times(&r);
    (dot(&gw, &gw) + r.iter().sum::<f64>().powi(2)).sqrt()
}

pub(crate) fn fit_logreg(
    dataset: &Dataset,
    indices: &[usize],
    eta: f64,
    penalty: Penalty,
    opts: &SolverOptions,
) -> Result<LinearModel> {
    dataset.require_both_classes(indices)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(RsmError::Config(format!("eta must be nonnegative, got {eta}")));
    }
    let design = Design::new(dataset, indices);
    if eta == 0.0 && design.d >= design.n {
        return Err(RsmError::Config(
            "logistic regression needs eta > 0 when measurements outnumber samples".into(),
        ));
    }
    let scale = origin_gradient_norm(&design).max(1e-300);
    let (w, b) = match penalty {
        Penalty::L2 => newton_cg(&design, eta, opts.tol * scale, opts.max_iter)?,
        Penalty::L1 => cd_newton_l1(&design, eta, opts.tol * scale, opts.max_iter)?,
    };
    Ok(LinearModel {
        w,
        b,
        kind: match penalty {
            Penalty::L1 => LinearKind::LogRegL1,
            Penalty::L2 => LinearKind::LogRegL2,
        },
        eta,
    })
}

pub fn train_logreg(dataset: &Dataset, eta: f64, penalty: Penalty) -> Result<LinearModel> {
    fit_logreg(dataset, &dataset.all_indices(), eta, penalty, &SolverOptions::default())
}

fn newton_cg(design: &Design, eta: f64, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let d = design.d;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut z = vec![0.0; design.n];
    let objective = |z: &[f64], w: &[f64]| loss(z, &design.y01) + 0.5 * eta * dot(w, w);
    let mut f = objective(&z, &w);
    for iter in 0..max_iter {
        let p: Vec<f64> = z.iter().map(|&zi| sigmoid(zi)).collect();
        let r: Vec<f64> = p.iter().zip(&design.y01).map(|(p, y)| p - y).collect();
        let mut gw = design.transpose_times(&r);
        axpy(eta, &w, &mut gw);
        let gb: f64 = r.iter().sum();
        let gnorm = (dot(&gw, &gw) + gb * gb).sqrt();
        if gnorm <= tol {
            return Ok((w, b));
        }
        let curv: Vec<f64> = p.iter().map(|p| (p * (1.0 - p)).max(1e-300)).collect();
        // H [v; vb] = [Xᵀ D (X v + vb) + η v ; 1ᵀ D (X v + vb)]
        let hess = |v: &[f64], vb: f64| -> (Vec<f64>, f64) {
            let u: Vec<f64> = design
                .margins(v, vb)
                .iter()
                .zip(&curv)
                .map(|(m, c)| m * c)
                .collect();
            let mut hv = design.transpose_times(&u);
            axpy(eta, v, &mut hv);
            (hv, u.iter().sum())
        };
        let (step, step_b) = conjugate_gradient(&hess, &gw, gb, gnorm);
        let slope = dot(&gw, &step) + gb * step_b;
        if slope >= 0.0 {
            return Err(RsmError::Training(format!(
                "Newton-CG lost descent at iteration {iter} (gradient norm {gnorm:.3e})"
            )));
        }
        let dz = design.margins(&step, step_b);
        let mut t = 1.0;
        loop {
            let z_new: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + t * b).collect();
            let w_new: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let f_new = objective(&z_new, &w_new);
            if f_new <= f + 1e-4 * t * slope {
                w = w_new;
                b += t * step_b;
                z = z_new;
                f = f_new;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                // No further decrease representable; accept if already near optimal.
                if gnorm <= 1e3 * tol {
                    return Ok((w, b));
                }
                return Err(RsmError::Training(format!(
                    "line search failed at iteration {iter} (gradient norm {gnorm:.3e})"
                )));
            }
        }
    }
    Err(RsmError::Training(format!(
        "L2 logistic regression did not converge in {max_iter} Newton iterations"
    )))
}

/// Approximately solves H s = -g by CG with forcing term min(0.5, √‖g‖)·‖g‖.
fn conjugate_gradient(
    hess: &dyn Fn(&[f64], f64) -> (Vec<f64>, f64),
    gw: &[f64],
    gb: f64,
    gnorm: f64,
) -> (Vec<f64>, f64) {
    let d = gw.len();
    let tol = gnorm * gnorm.sqrt().min(0.5);
    let mut s = vec![0.0; d];
    let mut sb = 0.0;
    let mut r: Vec<f64> = gw.iter().map(|v| -v).collect();
    let mut rb = -gb;
    let mut p = r.clone();
    let mut pb = rb;
    let mut rr = dot(&r, &r) + rb * rb;
    for _ in 0..(d + 1).min(500) {
        if rr.sqrt() <= tol {
            break;
        }
        let (hp, hpb) = hess(&p, pb);
        let curvature = dot(&p, &hp) + pb * hpb;
        if curvature <= 0.0 {
            break;
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut s);
        sb += alpha * pb;
        axpy(-alpha, &hp, &mut r);
        rb -= alpha * hpb;
        let rr_new = dot(&r, &r) + rb * rb;
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        pb = rb + beta * pb;
        rr = rr_new;
    }
    if s.iter().all(|&v| v == 0.0) && sb == 0.0 {
        // steepest descent fallback
        return (gw.iter().map(|v| -v).collect(), -gb);
    }
    (s, sb)
}

/// Minimum-norm subgradient component for coordinate with value `w`,
/// smooth gradient `g` and L1 weight `eta`.
fn l1_violation(w: f64, g: f64, eta: f64) -> f64 {
    if w > 0.0 {
        (g + eta).abs()
    } else if w < 0.0 {
        (g - eta).abs()
    } else {
        (g.abs() - eta).max(0.0)
    }
}

struct L1State<'a> {
    cols: Vec<f64>,
    y: &'a [f64],
    n: usize,
    eta: f64,
    w: Vec<f64>,
    b: f64,
    z: Vec<f64>,
    /// sigmoid(z), refreshed whenever z moves
    p: Vec<f64>,
}

impl L1State<'_> {
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    fn grad_hess(&self, j: Option<usize>) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        match j {
            Some(j) => {
                for ((&x, &p), &y) in self.col(j).iter().zip(&self.p).zip(self.y) {
                    g += (p - y) * x;
                    h += p * (1.0 - p) * x * x;
                }
            }
            None => {
                for (&p, &y) in self.p.iter().zip(self.y) {
                    g += p - y;
                    h += p * (1.0 - p);
                }
            }
        }
        (g, h)
    }

    /// Change in Σℓ from moving the margins by `step·x`.
    fn loss_delta(&self, x: Option<&[f64]>, step: f64) -> f64 {
        let mut delta = 0.0;
        for i in 0..self.n {
            let dz = step * x.map_or(1.0, |x| x[i]);
            if dz != 0.0 {
                let z = self.z[i];
                delta += softplus(z + dz) - softplus(z) - self.y[i] * dz;
            }
        }
        delta
    }

    /// One CDN update; returns the coordinate's violation before the step.
    fn update(&mut self, j: Option<usize>) -> f64 {
        let (g, h) = self.grad_hess(j);
        let h = h.max(1e-12);
        let (w, eta) = match j {
            Some(j) => (self.w[j], self.eta),
            None => (self.b, 0.0),
        };
        let violation = if j.is_some() { l1_violation(w, g, eta) } else { g.abs() };
        if violation == 0.0 {
            return 0.0;
        }
        let dir = if g + eta <= h * w {
            -(g + eta) / h
        } else if g - eta >= h * w {
            -(g - eta) / h
        } else {
            -w
        };
        if dir == 0.0 {
            return violation;
        }
        let x: Option<Vec<f64>> = j.map(|j| self.col(j).to_vec());
        let predicted = g * dir + eta * ((w + dir).abs() - w.abs());
        let mut t = 1.0;
        for _ in 0..60 {
            let step = t * dir;
            let actual =
                self.loss_delta(x.as_deref(), step) + eta * ((w + step).abs() - w.abs());
            if actual <= 0.01 * t * predicted {
                match j {
                    Some(j) => self.w[j] = w + step,
                    None => self.b = w + step,
                }
                for i in 0..self.n {
                    self.z[i] += step * x.as_ref().map_or(1.0, |x| x[i]);
                    self.p[i] = sigmoid(self.z[i]);
                }
                break;
            }
            t *= 0.5;
        }
        violation
    }
}

fn cd_newton_l1(design: &Design, eta: f64, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let mut st = L1State {
        cols: design.columns(),
        y: &design.y01,
        n: design.n,
        eta,
        w: vec![0.0; design.d],
        b: 0.0,
        z: vec![0.0; design.n],
        p: vec![0.5; design.n],
    };
    let full_violation = |st: &L1State| -> f64 {
        let mut v2 = st.grad_hess(None).0.powi(2);
        for j in 0..design.d {
            v2 += l1_violation(st.w[j], st.grad_hess(Some(j)).0, eta).powi(2);
        }
        v2.sqrt()
    };
    for _sweep in 0..max_iter {
        // full pass over every coordinate
        st.update(None);
        for j in 0..design.d {
            st.update(Some(j));
        }
        if full_violation(&st) <= tol {
            return Ok((st.w, st.b));
        }
        // then polish the active set
        let active: Vec<usize> = (0..design.d).filter(|&j| st.w[j] != 0.0).collect();
        for _ in 0..100 {
            let mut v2 = st.update(None).powi(2);
            for &j in &active {
                v2 += st.update(Some(j)).powi(2);
            }
            if v2.sqrt() <= 0.1 * tol {
                break;
            }
        }
    }
    Err(RsmError::Training(format!(
        "L1 logistic regression did not converge in {max_iter} sweeps (subgradient norm {:.3e})",
        full_violation(&st)
    )))
}

/// Norm of the smooth-part gradient (L2 penalty included) at a fitted model.
pub fn gradient_norm(model: &LinearModel, dataset: &Dataset) -> f64 {
    let design = Design::new(dataset, &dataset.all_indices());
    let z = design.margins(&model.w, model.b);
    let r: Vec<f64> = z.iter().zip(&design.y01).map(|(&z, y)| sigmoid(z) - y).collect();
    let mut gw = design.transpose_times(&r);
    axpy(model.eta, &model.w, &mut gw);
    (norm(&gw).powi(2) + r.iter().sum::<f64>().powi(2)).sqrt()
}
