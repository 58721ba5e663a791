use crate::error::{Error, Result};

/// Symmetric five-point operator on a node grid `nx` nodes wide. Fixed nodes keep
/// zero rows; their coupling is moved to the right-hand side.
pub(crate) struct FivePoint {
    pub nx: usize,
    pub diag: Vec<f64>,
    /// Coupling to the east neighbour (i+1, j), stored positive.
    pub east: Vec<f64>,
    /// Coupling to the north neighbour (i, j+1), stored positive.
    pub north: Vec<f64>,
    pub free: Vec<bool>,
}

impl FivePoint {
    /// `y = A x` restricted to free nodes.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nx = self.nx;
        for k in 0..x.len() {
            if !self.free[k] {
                y[k] = 0.0;
                continue;
            }
            let mut acc = self.diag[k] * x[k];
            let i = k % nx;
            if i + 1 < nx && self.free[k + 1] {
                acc -= self.east[k] * x[k + 1];
            }
            if i > 0 && self.free[k - 1] {
                acc -= self.east[k - 1] * x[k - 1];
            }
            if k + nx < x.len() && self.free[k + nx] {
                acc -= self.north[k] * x[k + nx];
            }
            if k >= nx && self.free[k - nx] {
                acc -= self.north[k - nx] * x[k - nx];
            }
            y[k] = acc;
        }
    }
}

/// Zero-fill incomplete Cholesky factor of a five-point operator.
struct IncompleteCholesky {
    pivots: Vec<f64>,
}

impl IncompleteCholesky {
    fn new(a: &FivePoint) -> Self {
        let nx = a.nx;
        let mut pivots = vec![1.0; a.diag.len()];
        for k in 0..a.diag.len() {
            if !a.free[k] {
                continue;
            }
            let mut d = a.diag[k];
            let i = k % nx;
            if i > 0 && a.free[k - 1] {
                d -= a.east[k - 1].powi(2) / pivots[k - 1];
            }
            if k >= nx && a.free[k - nx] {
                d -= a.north[k - nx].powi(2) / pivots[k - nx];
            }
            // breakdown guard; never hit for M-matrices
            pivots[k] = if d > 1e-300 { d } else { a.diag[k] };
        }
        Self { pivots }
    }

    fn solve(&self, a: &FivePoint, r: &[f64], z: &mut [f64]) {
        let nx = a.nx;
        let n = r.len();
        for k in 0..n {
            if !a.free[k] {
                z[k] = 0.0;
                continue;
            }
            let mut v = r[k];
            let i = k % nx;
            if i > 0 && a.free[k - 1] {
                v += a.east[k - 1] * z[k - 1];
            }
            if k >= nx && a.free[k - nx] {
                v += a.north[k - nx] * z[k - nx];
            }
            z[k] = v / self.pivots[k];
        }
        for k in (0..n).rev() {
            if !a.free[k] {
                continue;
            }
            let mut v = 0.0;
            let i = k % nx;
            if i + 1 < nx && a.free[k + 1] {
                v += a.east[k] * z[k + 1];
            }
            if k + nx < n && a.free[k + nx] {
                v += a.north[k] * z[k + nx];
            }
            z[k] += v / self.pivots[k];
        }
    }
}

pub(crate) struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients; `x` holds the initial guess on entry.
pub(crate) fn pcg(
    a: &FivePoint,
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let precond = IncompleteCholesky::new(a);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for k in 0..n {
        r[k] = if a.free[k] { b[k] - r[k] } else { 0.0 };
    }
    let mut z = vec![0.0; n];
    precond.solve(a, &r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    for it in 0..max_iterations {
        if residual < tolerance {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: residual,
            });
        }
        a.apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        precond.solve(a, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if residual < tolerance {
        return Ok(SolveStats {
            iterations: max_iterations,
            relative_residual: residual,
        });
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_1d_chain() {
        // -u'' = 0 on 5 nodes with u0 = 0, u4 = 1 folded into b
        let nx = 5;
        let free = vec![false, true, true, true, false];
        let a = FivePoint {
            nx,
            diag: vec![0.0, 2.0, 2.0, 2.0, 0.0],
            east: vec![1.0; 5],
            north: vec![0.0; 5],
            free,
        };
        let b = vec![0.0, 0.0, 0.0, 1.0, 0.0];
        let mut x = vec![0.0; 5];
        let stats = pcg(&a, &b, &mut x, 1e-12, 100).unwrap();
        assert!(stats.relative_residual < 1e-12);
        for (k, v) in [0.25, 0.5, 0.75].iter().enumerate() {
            assert!((x[k + 1] - v).abs() < 1e-12);
        }
    }
}
