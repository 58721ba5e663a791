//! Box-constrained Levenberg-Marquardt for small dense problems.
//!
//! Steps are solved from the damped normal equations
//! `(J^T J + lambda diag(J^T J)) delta = -J^T r` and projected back onto the
//! box. Damping follows Nielsen's gain-ratio update.

use nalgebra::{DMatrix, DVector};

/// Residual vector and Jacobian of a least-squares problem.
pub trait Problem {
    fn residual_count(&self) -> usize;

    fn residuals(&self, params: &[f64], out: &mut [f64]);

    /// Row `i`, column `j` holds `d r_i / d p_j`. The default uses central differences.
    fn jacobian(&self, params: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.residual_count();
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        let mut p = params.to_vec();
        for j in 0..params.len() {
            let h = 1e-6 * params[j].abs().max(1e-6);
            p[j] = params[j] + h;
            self.residuals(&p, &mut plus);
            p[j] = params[j] - h;
            self.residuals(&p, &mut minus);
            p[j] = params[j];
            for i in 0..m {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub max_iterations: usize,
    /// Relative reduction of the cost below which the fit stops.
    pub ftol: f64,
    /// Relative step size below which the fit stops.
    pub xtol: f64,
    /// Infinity norm of the projected gradient below which the fit stops.
    pub gtol: f64,
    pub initial_damping: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-12,
            gtol: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub params: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(J^T J)^{-1}` at the solution; `None` when singular.
    pub inverse_hessian: Option<DMatrix<f64>>,
    pub at_bound: Vec<bool>,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn project(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for k in 0..p.len() {
        p[k] = p[k].clamp(lower[k], upper[k]);
    }
}

pub fn minimize<P: Problem + ?Sized>(
    problem: &P,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &Options,
) -> Report {
    let n = initial.len();
    let m = problem.residual_count();
    let mut x = initial.to_vec();
    project(&mut x, lower, upper);
    let mut r = vec![0.0; m];
    problem.residuals(&x, &mut r);
    let mut cost = cost_of(&r);
    let mut jac = DMatrix::zeros(m, n);
    let mut lambda = options.initial_damping;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    let mut fresh = true;
    let (mut jtj, mut grad) = (DMatrix::zeros(n, n), DVector::zeros(n));
    while iterations < options.max_iterations {
        iterations += 1;
        if fresh {
            problem.jacobian(&x, &mut jac);
            jtj = jac.tr_mul(&jac);
            grad = jac.tr_mul(&DVector::from_column_slice(&r));
            // projected gradient: ignore components pushing into an active bound
            let pg = (0..n)
                .map(|k| {
                    let g = grad[k];
                    if (x[k] <= lower[k] && g > 0.0) || (x[k] >= upper[k] && g < 0.0) {
                        0.0
                    } else {
                        g.abs()
                    }
                })
                .fold(0.0, f64::max);
            if pg <= options.gtol * (1.0 + cost) {
                converged = true;
                break;
            }
            if cost == 0.0 {
                converged = true;
                break;
            }
        }
        let max_diag = (0..n).map(|k| jtj[(k, k)]).fold(0.0, f64::max).max(1e-300);
        let mut a = jtj.clone();
        let mut rhs = -&grad;
        for k in 0..n {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * max_diag);
        }
        // variables held on a bound by the gradient are frozen for this step
        for k in 0..n {
            if (x[k] <= lower[k] && grad[k] > 0.0) || (x[k] >= upper[k] && grad[k] < 0.0) {
                for j in 0..n {
                    a[(k, j)] = 0.0;
                    a[(j, k)] = 0.0;
                }
                a[(k, k)] = 1.0;
                rhs[k] = 0.0;
            }
        }
        let Some(step) = a.cholesky().map(|c| c.solve(&rhs)) else {
            lambda *= nu;
            nu *= 2.0;
            fresh = false;
            continue;
        };
        for k in 0..n {
            trial[k] = x[k] + step[k];
        }
        project(&mut trial, lower, upper);
        problem.residuals(&trial, &mut r_trial);
        let cost_trial = cost_of(&r_trial);
        let actual = DVector::from_fn(n, |k, _| trial[k] - x[k]);
        // predicted reduction of the local quadratic model
        let predicted = -(grad.dot(&actual) + 0.5 * actual.dot(&(&jtj * &actual)));
        let rho = if predicted > 0.0 {
            (cost - cost_trial) / predicted
        } else {
            -1.0
        };
        let step_norm = actual.norm();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if cost_trial.is_finite() && cost_trial < cost {
            let rel = (cost - cost_trial) / cost.max(1e-300);
            x.copy_from_slice(&trial);
            std::mem::swap(&mut r, &mut r_trial);
            cost = cost_trial;
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            fresh = true;
            if rel < options.ftol || step_norm <= options.xtol * (x_norm + options.xtol) {
                converged = true;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            fresh = false;
            if step_norm <= options.xtol * (x_norm + options.xtol) || lambda > 1e30 {
                converged = true;
                break;
            }
        }
    }

    problem.jacobian(&x, &mut jac);
    let inverse_hessian = jac.tr_mul(&jac).try_inverse();
    let at_bound = (0..n)
        .map(|k| x[k] <= lower[k] || x[k] >= upper[k])
        .collect();
    Report {
        params: x,
        cost,
        iterations,
        converged,
        inverse_hessian,
        at_bound,
    }
}
