//! Finite-window linear algebra for the lattice generator.
//!
//! All solves use the `pi`-weighted structure: the system `(eps - L) h = f` is
//! multiplied by `pi` to become symmetric, and convergence is measured by the
//! relative residual in `l^2(Lambda, pi)`.

mod cg;
mod csr;
mod field;
mod operator;
mod window;

use alloc::vec;
use alloc::vec::Vec;

pub use cg::{pcg, CgOutcome, SymmetricOperator};
pub use csr::CsrMatrix;
pub use field::LatticeField;
pub use operator::{LatticeOperator, MassiveOperator};
pub use window::{Boundary, Window};

use crate::environment::Environment;
use crate::{math, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Largest per-component relative residual in `l^2(Lambda, pi)`.
    pub residual: f64,
    pub converged: bool,
    pub tolerance: f64,
}

impl SolveReport {
    fn merge(self, other: SolveReport) -> SolveReport {
        SolveReport {
            iterations: self.iterations.max(other.iterations),
            residual: self.residual.max(other.residual),
            converged: self.converged && other.converged,
            tolerance: self.tolerance,
        }
    }

    /// `Err(NotConverged)` unless the solve met its tolerance.
    pub fn require(self) -> Result<SolveReport> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations, residual: self.residual })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Defaults to `50 (2r + 1)`, or `50` times the longest side on a torus.
    pub max_iter: Option<usize>,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        SolverOptions { tol, max_iter: None }
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = Some(n);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        Ok(())
    }

    pub fn cap(&self, window: &Window) -> usize {
        self.max_iter.unwrap_or_else(|| match window.radius() {
            Some(r) => 50 * (2 * r + 1),
            None => 50 * window.sides().iter().copied().max().unwrap_or(1),
        })
    }
}

fn check_field(op: &LatticeOperator, f: &LatticeField) -> Result<()> {
    if f.window() != op.window() {
        return Err(Error::invalid("field window differs from operator window"));
    }
    Ok(())
}

/// Applies `L` componentwise, reading 0 outside a centered window.
pub fn apply_generator(env: &Environment, field: &LatticeField) -> Result<LatticeField> {
    let op = LatticeOperator::new(env, field.window())?;
    Ok(apply_generator_with(&op, field))
}

pub fn apply_generator_with(op: &LatticeOperator, field: &LatticeField) -> LatticeField {
    let mut out = LatticeField::zeros(field.window().clone(), field.arity());
    let mut buf = vec![0.0; op.len()];
    for k in 0..field.arity() {
        op.generator(&field.component(k), &mut buf);
        out.set_component(k, &buf);
    }
    out
}

/// Solves `(eps - L) h = f` per component with a zero initial guess.
///
/// `eps = 0` is the Dirichlet problem; on a torus it is solved on the
/// mean-free subspace and requires `sum pi f = 0` for exactness.
pub fn solve_with(op: &LatticeOperator, rhs: &LatticeField, eps: f64, opts: SolverOptions) -> Result<(LatticeField, SolveReport)> {
    opts.validate()?;
    check_field(op, rhs)?;
    if eps < 0.0 {
        return Err(Error::invalid("mass must be nonnegative"));
    }
    let singular = eps == 0.0 && op.window().boundary() == Boundary::Periodic;
    let a = op.massive(eps);
    let cap = opts.cap(op.window());
    let mut out = LatticeField::zeros(rhs.window().clone(), rhs.arity());
    let mut report = SolveReport { iterations: 0, residual: 0.0, converged: true, tolerance: opts.tol };
    for k in 0..rhs.arity() {
        let b: Vec<f64> = rhs.component(k).iter().zip(op.pi()).map(|(f, p)| f * p).collect();
        let mut x = vec![0.0; op.len()];
        let o = pcg(&a, &b, &mut x, op.pi(), opts.tol, cap, singular);
        out.set_component(k, &x);
        report = report.merge(SolveReport { iterations: o.iterations, residual: o.residual, converged: o.converged, tolerance: opts.tol });
    }
    Ok((out, report))
}

/// `(-L) h = f` inside the window, `h = 0` outside.
pub fn solve_dirichlet(env: &Environment, window: &Window, rhs: &LatticeField, tol: f64) -> Result<(LatticeField, SolveReport)> {
    let op = LatticeOperator::new(env, window)?;
    solve_with(&op, rhs, 0.0, SolverOptions::new(tol))
}

/// `(eps - L) h = f` inside the window, `h = 0` outside.
pub fn solve_massive(env: &Environment, window: &Window, rhs: &LatticeField, epsilon: f64, tol: f64) -> Result<(LatticeField, SolveReport)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let op = LatticeOperator::new(env, window)?;
    solve_with(&op, rhs, epsilon, SolverOptions::new(tol))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSolution {
    pub field: LatticeField,
    pub terms: usize,
    /// `(1 + eps)^{-terms} / eps * max |f|`.
    pub tail_bound: f64,
}

/// Partial sum `sum_{n < terms} (1 + eps)^{-(n+1)} Pi^n f` with `Pi = 1 + L`.
pub fn neumann_series_massive(env: &Environment, window: &Window, rhs: &LatticeField, epsilon: f64, n_terms: usize) -> Result<SeriesSolution> {
    let op = LatticeOperator::new(env, window)?;
    neumann_series_with(&op, rhs, epsilon, n_terms)
}

pub fn neumann_series_with(op: &LatticeOperator, rhs: &LatticeField, epsilon: f64, n_terms: usize) -> Result<SeriesSolution> {
    if !(epsilon > 0.0) || n_terms == 0 {
        return Err(Error::invalid("series needs epsilon > 0 and at least one term"));
    }
    check_field(op, rhs)?;
    let q = 1.0 / (1.0 + epsilon);
    let mut out = LatticeField::zeros(rhs.window().clone(), rhs.arity());
    let mut next = vec![0.0; op.len()];
    for k in 0..rhs.arity() {
        let mut term = rhs.component(k);
        let mut acc = vec![0.0; op.len()];
        let mut w = q;
        for n in 0..n_terms {
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += w * t;
            }
            if n + 1 < n_terms {
                op.transition(&term, &mut next);
                core::mem::swap(&mut term, &mut next);
                w *= q;
            }
        }
        out.set_component(k, &acc);
    }
    let tail_bound = math::powf(q, n_terms as f64) / epsilon * rhs.max_abs();
    Ok(SeriesSolution { field: out, terms: n_terms, tail_bound })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    /// `<f, (-L)^{-1} f>` in `l^2(Lambda, pi)`, summed over components.
    pub value: f64,
    pub solution: LatticeField,
    pub report: SolveReport,
}

/// `<f, (-L)_Lambda^{-1} f>_{l^2(Lambda, pi)}` through one Dirichlet solve.
pub fn quadratic_form(env: &Environment, window: &Window, f: &LatticeField, tol: f64) -> Result<QuadraticForm> {
    let op = LatticeOperator::new(env, window)?;
    quadratic_form_with(&op, f, tol)
}

pub fn quadratic_form_with(op: &LatticeOperator, f: &LatticeField, tol: f64) -> Result<QuadraticForm> {
    let (h, report) = solve_with(op, f, 0.0, SolverOptions::new(tol))?;
    let report = report.require()?;
    let value = (0..f.arity()).map(|k| op.pi_inner(&f.component(k), &h.component(k))).sum();
    Ok(QuadraticForm { value, solution: h, report })
}

/// `sum_x pi(x) g(x) . h(x)` over the window.
pub fn pi_inner(op: &LatticeOperator, g: &LatticeField, h: &LatticeField) -> f64 {
    (0..g.arity()).map(|k| op.pi_inner(&g.component(k), &h.component(k))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PeriodicCell;

    fn line(n: usize) -> Window {
        Window::centered(1, n).unwrap()
    }

    #[test]
    fn generator_stencil_on_indicator() {
        let env = Environment::constant(1, 1.0).unwrap();
        let w = line(1);
        let h = LatticeField::scalar(w.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        let lh = apply_generator(&env, &h).unwrap();
        assert_eq!(lh.values(), &[0.5, -1.0, 0.5]);
    }

    #[test]
    fn three_site_dirichlet_solve() {
        let env = Environment::constant(1, 1.0).unwrap();
        let w = line(1);
        let f = LatticeField::scalar(w.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        let (h, rep) = solve_dirichlet(&env, &w, &f, 1e-14).unwrap();
        assert!(rep.converged);
        for (a, b) in h.values().iter().zip([1.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let env = Environment::constant(2, 1.0).unwrap();
        let w = Window::centered(2, 3).unwrap();
        let f = LatticeField::zeros(w.clone(), 2);
        let (h, rep) = solve_massive(&env, &w, &f, 0.5, 1e-10).unwrap();
        assert!(rep.converged && h.max_abs() == 0.0);
        let s = neumann_series_massive(&env, &w, &f, 0.5, 3).unwrap();
        assert_eq!(s.field.max_abs(), 0.0);
    }

    #[test]
    fn first_series_term() {
        let env = Environment::periodic(PeriodicCell::line(&[1.0, 2.0]).unwrap()).unwrap();
        let w = line(3);
        let f = LatticeField::from_fn(w.clone(), 1, |x, _| x.get(0) as f64);
        let s = neumann_series_massive(&env, &w, &f, 0.25, 1).unwrap();
        for (a, b) in s.field.values().iter().zip(f.values()) {
            assert!((a - b / 1.25).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn energy_matches_quadratic_form_of_generator() {
        let env = Environment::periodic(PeriodicCell::new(vec![2, 3], vec![1.0, 2.0, 0.5, 3.0, 1.5, 1.0, 2.5, 0.7, 1.1, 0.9, 1.3, 2.2]).unwrap()).unwrap();
        let w = Window::centered(2, 4).unwrap();
        let op = LatticeOperator::new(&env, &w).unwrap();
        let h: Vec<f64> = (0..op.len()).map(|i| math::sqrt(i as f64 + 0.5) - 3.0).collect();
        let mut lh = vec![0.0; op.len()];
        op.generator(&h, &mut lh);
        let neg: Vec<f64> = lh.iter().map(|v| -v).collect();
        let lhs = op.pi_inner(&h, &neg);
        assert!((lhs - op.edge_energy(&h)).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn torus_requires_dividing_period() {
        let env = Environment::periodic(PeriodicCell::line(&[1.0, 2.0]).unwrap()).unwrap();
        assert!(LatticeOperator::new(&env, &Window::torus(&[3]).unwrap()).is_err());
        let op = LatticeOperator::new(&env, &Window::torus(&[4]).unwrap()).unwrap();
        assert_eq!(op.pi(), &[3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn cap_default() {
        let o = SolverOptions::new(1e-8);
        assert_eq!(o.cap(&line(4)), 450);
        assert_eq!(o.with_max_iter(7).cap(&line(4)), 7);
    }
}
