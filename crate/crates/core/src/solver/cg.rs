//! Jacobi-preconditioned conjugate gradients for symmetric positive
//! (semi)definite operators.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

pub trait SymmetricOperator {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `||b - A x||_W / ||b||_W` with `||r||_W^2 = sum r_i^2 / w_i`.
    pub residual: f64,
    pub converged: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_norm(r: &[f64], w: &[f64]) -> f64 {
    math::sqrt(r.iter().zip(w).map(|(r, w)| r * r / w).sum())
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `A x = b` starting from `x`. Convergence is measured in the
/// `W^{-1}`-weighted residual norm given by `norm_weights`.
///
/// With `singular = true` the operator is assumed to have the constants as
/// kernel; residuals are kept mean-free and the solution is returned mean-free.
pub fn pcg<A: SymmetricOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    norm_weights: &[f64],
    tol: f64,
    max_iter: usize,
    singular: bool,
) -> CgOutcome {
    let n = a.size();
    debug_assert_eq!(b.len(), n);
    let mut rhs = b.to_vec();
    if singular {
        project_mean(&mut rhs);
    }
    let b_norm = weighted_norm(&rhs, norm_weights);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, residual: 0.0, converged: true };
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut ax = vec![0.0; n];
    a.apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    if singular {
        project_mean(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = weighted_norm(&r, norm_weights) / b_norm;
    let mut it = 0;
    while res > tol && it < max_iter {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if singular {
            project_mean(&mut r);
        }
        it += 1;
        // refresh the recursive residual now and then to limit drift
        if it % 200 == 0 {
            a.apply(x, &mut ax);
            for i in 0..n {
                r[i] = rhs[i] - ax[i];
            }
            if singular {
                project_mean(&mut r);
            }
        }
        res = weighted_norm(&r, norm_weights) / b_norm;
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
    if singular {
        project_mean(x);
    }
    // report the true residual
    a.apply(x, &mut ax);
    let mut true_r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    if singular {
        project_mean(&mut true_r);
    }
    let residual = weighted_norm(&true_r, norm_weights) / b_norm;
    CgOutcome { iterations: it, residual, converged: residual <= tol }
}
