//! Preconditioned conjugate gradients and restarted GMRES.
//!
//! Tolerances are absolute bounds on the Euclidean norm of the true residual
//! `b - A x`; callers scale them.

use super::{CsrMatrix, LinalgError};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
}

/// Adapts a closure `(x, y) -> y = A x` into an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub trait Preconditioner {
    /// `z = M^{-1} r`
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct FnPreconditioner<F>(pub F);

impl<F: Fn(&[f64], &mut [f64])> Preconditioner for FnPreconditioner<F> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (self.0)(r, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

/// Preconditioned conjugate gradients from a zero initial guess.
///
/// Non-convergence within `max_iter` is reported through
/// [`KrylovReport::converged`]; a vanishing or negative curvature is an error.
pub fn cg(
    op: &dyn LinearOperator,
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovReport), LinalgError> {
    let n = op.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: b.len() });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut res = norm(&r);
    if res <= tol {
        return Ok((x, KrylovReport { iterations: 0, residual_norm: res, converged: true }));
    }
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !pq.is_finite() {
            return Err(LinalgError::Breakdown { iteration: it, detail: format!("p.Ap = {pq:e}") });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = norm(&r);
        if res <= tol {
            // guard against drift of the recursive residual
            res = true_residual(op, b, &x, &mut r);
            if res <= tol {
                return Ok((x, KrylovReport { iterations: it, residual_norm: res, converged: true }));
            }
            precond.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) || !rz_new.is_finite() {
            return Err(LinalgError::Breakdown { iteration: it, detail: format!("r.Mr = {rz_new:e}") });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = true_residual(op, b, &x, &mut r);
    Ok((x, KrylovReport { iterations: it, residual_norm: res, converged: res <= tol }))
}

/// Right-preconditioned restarted GMRES (modified Gram–Schmidt, Givens
/// rotations) from a zero initial guess.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovReport), LinalgError> {
    let n = op.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: b.len() });
    }
    let m = restart.max(1);
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut total = 0;
    let mut last_cycle_res = f64::INFINITY;
    loop {
        let beta = true_residual(op, b, &x, &mut r);
        if beta <= tol {
            return Ok((x, KrylovReport { iterations: total, residual_norm: beta, converged: true }));
        }
        if total >= max_iter || !(beta < last_cycle_res) {
            return Ok((x, KrylovReport { iterations: total, residual_norm: beta, converged: false }));
        }
        last_cycle_res = beta;

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut precond_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, rotated in place.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < max_iter {
            let mut z = vec![0.0; n];
            precond.apply(&basis[k], &mut z);
            let mut w = vec![0.0; n];
            op.apply(&z, &mut w);
            precond_basis.push(z);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wl, vl) in w.iter_mut().zip(v) {
                    *wl -= hij * vl;
                }
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push(c);
            sn.push(s);
            h.push(col);
            k += 1;
            total += 1;
            if g[k].abs() <= tol || wn <= 1e-14 * beta {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the k x k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            if h[i][i] == 0.0 {
                return Err(LinalgError::Breakdown { iteration: total, detail: "singular Hessenberg".into() });
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&precond_basis[j]) {
                *xi += yj * zi;
            }
        }
    }
}
