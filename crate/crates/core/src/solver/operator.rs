use alloc::vec;
use alloc::vec::Vec;

use super::cg::SymmetricOperator;
use super::{Boundary, Window};
use crate::environment::Environment;
use crate::lattice::Edge;
use crate::stats::CompensatedSum;
use crate::{Error, Result};

const EXTERIOR: usize = usize::MAX;

/// The lattice generator `L` of an environment restricted to a window, with
/// conductances cached per site in the order `+e_1, -e_1, ..., +e_d, -e_d`.
///
/// On a centered window, neighbors outside carry the value 0. On a torus the
/// environment's periods must divide the sides.
#[derive(Clone, Debug)]
pub struct LatticeOperator {
    window: Window,
    dim: usize,
    nbr: Vec<usize>,
    cond: Vec<f64>,
    pi: Vec<f64>,
}

impl LatticeOperator {
    pub fn new(env: &Environment, window: &Window) -> Result<Self> {
        let d = env.dim();
        if window.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: window.dim() });
        }
        if window.boundary() == Boundary::Periodic {
            let periods = env.periods().ok_or(Error::NotPeriodic(window.sides()[0]))?;
            for (p, s) in periods.iter().zip(window.sides()) {
                if s % p != 0 {
                    return Err(Error::NotPeriodic(*s));
                }
            }
        }
        let n = window.len();
        let mut nbr = Vec::with_capacity(n * 2 * d);
        let mut cond = Vec::with_capacity(n * 2 * d);
        let mut pi = Vec::with_capacity(n);
        for x in window.sites() {
            let mut total = 0.0;
            for axis in 0..d {
                for (delta, base) in [(1, x), (-1, x.offset(axis, -1))] {
                    let c = env.conductance(&Edge { base, axis })?;
                    let y = x.offset(axis, delta);
                    nbr.push(window.index(&y).unwrap_or(EXTERIOR));
                    cond.push(c);
                    total += c;
                }
            }
            pi.push(total);
        }
        Ok(LatticeOperator { window: window.clone(), dim: d, nbr, cond, pi })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `pi(x)` for every window site.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Neighbor index and conductance of slot `k` (`2 axis` for `+`, `2 axis + 1` for `-`);
    /// `None` for a neighbor outside a centered window.
    #[inline]
    pub fn neighbor(&self, i: usize, k: usize) -> (Option<usize>, f64) {
        let j = self.nbr[i * 2 * self.dim + k];
        ((j != EXTERIOR).then_some(j), self.cond[i * 2 * self.dim + k])
    }

    /// `(L h)(x) = sum_y P(x, y) (h(y) - h(x))`.
    pub fn generator(&self, h: &[f64], out: &mut [f64]) {
        let m = 2 * self.dim;
        for i in 0..self.len() {
            let hi = h[i];
            let mut s = 0.0;
            for k in 0..m {
                let j = self.nbr[i * m + k];
                let hj = if j == EXTERIOR { 0.0 } else { h[j] };
                s += self.cond[i * m + k] * (hj - hi);
            }
            out[i] = s / self.pi[i];
        }
    }

    /// `(pi (eps - L) h)(x) = eps pi(x) h(x) + sum_y c(x, y) (h(x) - h(y))`.
    pub fn weighted_massive(&self, eps: f64, h: &[f64], out: &mut [f64]) {
        let m = 2 * self.dim;
        for i in 0..self.len() {
            let hi = h[i];
            let mut s = eps * self.pi[i] * hi;
            for k in 0..m {
                let j = self.nbr[i * m + k];
                let hj = if j == EXTERIOR { 0.0 } else { h[j] };
                s += self.cond[i * m + k] * (hi - hj);
            }
            out[i] = s;
        }
    }

    /// `Pi h = h + L h`.
    pub fn transition(&self, h: &[f64], out: &mut [f64]) {
        let m = 2 * self.dim;
        for i in 0..self.len() {
            let mut s = 0.0;
            for k in 0..m {
                let j = self.nbr[i * m + k];
                if j != EXTERIOR {
                    s += self.cond[i * m + k] * h[j];
                }
            }
            out[i] = s / self.pi[i];
        }
    }

    /// `sum_x pi(x) g(x) h(x)`.
    pub fn pi_inner(&self, g: &[f64], h: &[f64]) -> f64 {
        self.pi.iter().zip(g).zip(h).map(|((p, g), h)| p * g * h).collect::<CompensatedSum>().value()
    }

    /// `sum_{e in E} c(e) (grad h(e))^2`, one term per undirected edge of the
    /// window (exterior endpoints read 0).
    pub fn edge_energy(&self, h: &[f64]) -> f64 {
        let m = 2 * self.dim;
        let mut s = CompensatedSum::new();
        for i in 0..self.len() {
            for k in 0..m {
                let j = self.nbr[i * m + k];
                let c = self.cond[i * m + k];
                if k % 2 == 0 {
                    let hj = if j == EXTERIOR { 0.0 } else { h[j] };
                    s.add(c * (hj - h[i]) * (hj - h[i]));
                } else if j == EXTERIOR {
                    s.add(c * h[i] * h[i]);
                }
            }
        }
        s.value()
    }

    /// `pi (eps - L)` as a symmetric operator for the conjugate-gradient solver.
    pub fn massive(&self, eps: f64) -> MassiveOperator<'_> {
        MassiveOperator { op: self, eps }
    }
}

/// `pi (eps - L)` restricted to a window; symmetric in the plain inner product.
#[derive(Clone, Copy, Debug)]
pub struct MassiveOperator<'a> {
    op: &'a LatticeOperator,
    eps: f64,
}

impl SymmetricOperator for MassiveOperator<'_> {
    fn size(&self) -> usize {
        self.op.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.weighted_massive(self.eps, x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        let m = 2 * self.op.dim;
        let mut d = vec![0.0; self.op.len()];
        for (i, di) in d.iter_mut().enumerate() {
            let mut s = self.eps * self.op.pi[i];
            for k in 0..m {
                if self.op.nbr[i * m + k] != i {
                    s += self.op.cond[i * m + k];
                }
            }
            *di = s;
        }
        d
    }
}
