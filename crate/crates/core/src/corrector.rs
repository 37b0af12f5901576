//! Correctors: the explicit one-dimensional `psi`, the approximate corrector
//! `chi_eps` solving `(eps - L) chi = V`, and the second-order corrector
//! `theta` solving `L theta = eps chi` on `Lambda_r` with zero outside.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::segment_edge_average;
use crate::environment::Environment;
use crate::lattice::{Edge, Site};
use crate::solver::{solve_with, LatticeField, LatticeOperator, SolveReport, SolverOptions, Window};
use crate::stats::CompensatedSum;
use crate::walk::Walker;
use crate::{math, Error, Result};

/// `x -> psi(x)` on `[-n, n]` with `psi(0) = 0` and `psi(x+1) - psi(x) = a / c(x, x+1)`
/// (up to rounding).
#[derive(Clone, Debug, PartialEq)]
pub struct Corrector1D {
    pub a: f64,
    pub n: usize,
    psi: Vec<f64>,
    /// `(m, max_{|x| <= m} |psi(x) - x| / m)` for `m = 1, 2, 4, ...` and `m = n`.
    pub profile: Vec<(usize, f64)>,
}

/// `a = 1 / mean(1/c)` over the `2 r_norm` edges of `[-r_norm, r_norm]`.
pub fn corrector_1d(env: &Environment, n: usize, r_norm: usize) -> Result<Corrector1D> {
    if n == 0 || r_norm == 0 {
        return Err(Error::invalid("corrector needs n, r_norm >= 1"));
    }
    let mean_inv = segment_edge_average(env, r_norm, |c| 1.0 / c)?;
    let a = 1.0 / mean_inv;
    let c = |x: i64| env.conductance(&Edge { base: Site::from_array([x, 0, 0, 0], 1), axis: 0 });
    let ni = n as i64;
    let mut psi = vec![0.0; 2 * n + 1];
    // psi(x) = (sum of 1/c from 0 to x) / mean(1/c), so periodic sums land exactly
    let mut s = CompensatedSum::new();
    for x in 0..ni {
        s.add(1.0 / c(x)?);
        psi[(x + 1 + ni) as usize] = s.value() / mean_inv;
    }
    let mut s = CompensatedSum::new();
    for x in (-ni + 1..=0).rev() {
        s.add(1.0 / c(x - 1)?);
        psi[(x - 1 + ni) as usize] = -s.value() / mean_inv;
    }
    let mut corr = Corrector1D { a, n, psi, profile: Vec::new() };
    let mut m = 1;
    while m < n {
        corr.profile.push((m, corr.sublinearity(m)));
        m *= 2;
    }
    corr.profile.push((n, corr.sublinearity(n)));
    Ok(corr)
}

impl Corrector1D {
    pub fn psi(&self, x: i64) -> Option<f64> {
        let i = x + self.n as i64;
        (0..self.psi.len() as i64).contains(&i).then(|| self.psi[i as usize])
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    /// `max_{|x| <= m} |psi(x) - x| / m`, for `1 <= m <= n`.
    pub fn sublinearity(&self, m: usize) -> f64 {
        let m = m.min(self.n);
        let mi = m as i64;
        let dev = (-mi..=mi).map(|x| (self.psi(x).unwrap() - x as f64).abs()).fold(0.0, f64::max);
        dev / m as f64
    }

    /// `max |P(x, x+1)(psi(x+1) - psi(x)) + P(x, x-1)(psi(x-1) - psi(x))|`
    /// over `|x| < n`.
    pub fn harmonic_defect(&self, env: &Environment) -> f64 {
        let ni = self.n as i64;
        let mut worst: f64 = 0.0;
        for x in -ni + 1..ni {
            let s = Site::from_array([x, 0, 0, 0], 1);
            let up = env.c_plus(s, 0);
            let down = env.c_minus(s, 0);
            let p = self.psi(x).unwrap();
            let v = (up * (self.psi(x + 1).unwrap() - p) + down * (self.psi(x - 1).unwrap() - p)) / (up + down);
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// `E[(psi(X_1) - psi(x))^2 | X_0 = x] = a^2 / pi(x) (1/c(x, x+1) + 1/c(x-1, x))`.
#[inline]
pub fn martingale_increment_variance(env: &Environment, a: f64, x: Site) -> f64 {
    let up = env.c_plus(x, 0);
    let down = env.c_minus(x, 0);
    a * a * (1.0 / up + 1.0 / down) / (up + down)
}

/// `(1/n) sum_{k < n}` of the conditional squared increments of `psi(X_k)`.
pub fn martingale_variance_statistic(env: &Environment, a: f64, x0: Site, n: usize, seed: u64) -> Result<f64> {
    if env.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: env.dim() });
    }
    if n == 0 {
        return Err(Error::invalid("statistic needs n >= 1"));
    }
    let mut w = Walker::new(env, x0, seed)?;
    let mut s = CompensatedSum::new();
    let mut x = x0;
    for _ in 0..n {
        s.add(martingale_increment_variance(env, a, x));
        x = w.step();
    }
    Ok(s.value() / n as f64)
}

/// `(1/n) sum_{k < n} E[(Delta psi)^2 1{|Delta psi| > eps sqrt(n)} | X_k]`.
pub fn lindeberg_statistic(env: &Environment, a: f64, x0: Site, n: usize, eps: f64, seed: u64) -> Result<f64> {
    if env.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: env.dim() });
    }
    if n == 0 {
        return Err(Error::invalid("statistic needs n >= 1"));
    }
    let threshold = eps * math::sqrt(n as f64);
    let mut w = Walker::new(env, x0, seed)?;
    let mut s = CompensatedSum::new();
    let mut x = x0;
    for _ in 0..n {
        let up = env.c_plus(x, 0);
        let down = env.c_minus(x, 0);
        let pi = up + down;
        for c in [up, down] {
            let inc = a / c;
            if inc > threshold {
                s.add(c / pi * inc * inc);
            }
        }
        x = w.step();
    }
    Ok(s.value() / n as f64)
}

/// `ceil(eps^{-1/2} ln(1/tol))`.
pub fn padding(epsilon: f64, tol: f64) -> usize {
    math::ceil(math::ln(1.0 / tol) / math::sqrt(epsilon)).max(1.0) as usize
}

/// `V o tau_x` on every site of a window, one component per axis.
pub fn drift_field(env: &Environment, window: &Window) -> LatticeField {
    LatticeField::from_fn(window.clone(), env.dim(), |x, i| {
        let up = env.c_plus(x, i);
        let down = env.c_minus(x, i);
        (up - down) / env.pi(x)
    })
}

/// `chi_eps o tau_x` for `x` in `Lambda_r`, from a solve on `Lambda_{r + pad}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiField {
    pub epsilon: f64,
    pub r: usize,
    pub pad: usize,
    pub tol: f64,
    /// Restriction to `Lambda_r`.
    pub field: LatticeField,
    /// The full solve on `Lambda_{r + pad}`.
    pub padded: LatticeField,
    pub report: SolveReport,
    /// Relative `pi`-weighted norm of `(eps - L) chi - V` over `Lambda_r`.
    pub residual: f64,
}

fn weighted_relative(op: &LatticeOperator, res: &LatticeField, rhs: &LatticeField, keep: impl Fn(&Site) -> bool) -> f64 {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for i in 0..op.len() {
        let x = op.window().site(i);
        if !keep(&x) {
            continue;
        }
        let p = op.pi()[i];
        for k in 0..res.arity() {
            num.add(p * res.get(i, k) * res.get(i, k));
            den.add(p * rhs.get(i, k) * rhs.get(i, k));
        }
    }
    if den.value() == 0.0 {
        if num.value() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        math::sqrt(num.value() / den.value())
    }
}

/// `rhs - (eps - L) h` on the operator's window.
fn massive_residual(op: &LatticeOperator, h: &LatticeField, rhs: &LatticeField, eps: f64) -> LatticeField {
    let mut out = LatticeField::zeros(rhs.window().clone(), rhs.arity());
    let mut lh = vec![0.0; op.len()];
    for k in 0..rhs.arity() {
        let hk = h.component(k);
        op.generator(&hk, &mut lh);
        let r: Vec<f64> = (0..op.len()).map(|i| rhs.get(i, k) - (eps * hk[i] - lh[i])).collect();
        out.set_component(k, &r);
    }
    out
}

/// Solves `(eps - L) chi = V` componentwise on `Lambda_{r + pad}` with
/// `pad = ceil(eps^{-1/2} ln(1/tol))` and reports it on `Lambda_r`.
pub fn chi_eps(env: &Environment, r: usize, epsilon: f64, tol: f64) -> Result<ChiField> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    if !(tol > 0.0 && tol < 1.0) || r == 0 {
        return Err(Error::invalid("chi_eps needs r >= 1 and tol in (0, 1)"));
    }
    let pad = padding(epsilon, tol);
    let big = Window::centered(env.dim(), r + pad)?;
    let op = LatticeOperator::new(env, &big)?;
    let v = drift_field(env, &big);
    // the padded residual is spread over more sites than Lambda_r sees
    let (chi, report) = solve_with(&op, &v, epsilon, SolverOptions::new(tol * 0.1))?;
    let report = report.require()?;
    let res = massive_residual(&op, &chi, &v, epsilon);
    let ri = r as i64;
    let residual = weighted_relative(&op, &res, &v, |x| x.norm_inf() <= ri);
    let small = Window::centered(env.dim(), r)?;
    Ok(ChiField { epsilon, r, pad, tol, field: chi.restrict(&small), padded: chi, report, residual })
}

impl ChiField {
    /// `chi_eps o tau_x` anywhere in the padded window (zero beyond it).
    pub fn at(&self, x: &Site) -> Vec<f64> {
        (0..self.padded.arity()).map(|k| self.padded.at(x, k)).collect()
    }

    /// `sqrt(sum_{Lambda_r} pi |eps chi|^2 / sum_{Lambda_r} pi)`.
    pub fn eps_norm(&self, env: &Environment) -> f64 {
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for (i, x) in self.field.window().sites().enumerate() {
            let p = env.pi(x);
            let sq: f64 = (0..self.field.arity()).map(|k| self.field.get(i, k) * self.field.get(i, k)).sum();
            num.add(p * self.epsilon * self.epsilon * sq);
            den.add(p);
        }
        math::sqrt(num.value() / den.value())
    }

    /// The same field scaled by `s` (solver metadata kept).
    pub fn scaled(&self, s: f64) -> ChiField {
        ChiField { field: self.field.scaled(s), padded: self.padded.scaled(s), ..self.clone() }
    }
}

pub fn eps_chi_norm(env: &Environment, r: usize, epsilon: f64, tol: f64) -> Result<f64> {
    Ok(chi_eps(env, r, epsilon, tol)?.eps_norm(env))
}

/// `chi_eps` on a torus of the given sides (multiples of the periods), with
/// the wrap-around stencil; no truncation error.
pub fn chi_eps_periodic(env: &Environment, sides: &[usize], epsilon: f64, tol: f64) -> Result<(LatticeField, SolveReport)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let torus = Window::torus(sides)?;
    let op = LatticeOperator::new(env, &torus)?;
    let v = drift_field(env, &torus);
    let (chi, report) = solve_with(&op, &v, epsilon, SolverOptions::new(tol))?;
    Ok((chi, report.require()?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaField {
    pub r: usize,
    pub epsilon: f64,
    /// Values on `Lambda_r`; zero outside.
    pub field: LatticeField,
    pub report: SolveReport,
}

/// `L theta = eps chi` on `Lambda_r`, `theta = 0` outside.
pub fn theta(env: &Environment, r: usize, epsilon: f64, chi: &ChiField, tol: f64) -> Result<ThetaField> {
    if chi.r < r {
        return Err(Error::Sizing { radius: chi.r, needed: r });
    }
    let w = Window::centered(env.dim(), r)?;
    let op = LatticeOperator::new(env, &w)?;
    // (-L) theta = -eps chi
    let rhs = chi.field.restrict(&w).scaled(-epsilon);
    let (field, report) = solve_with(&op, &rhs, 0.0, SolverOptions::new(tol))?;
    Ok(ThetaField { r, epsilon, field, report: report.require()? })
}

/// `max_{x in Lambda_r, i} |L(x_i + chi_i - theta_i)(x)|`.
///
/// `chi` is read from its padded window, `theta` is zero outside `Lambda_r`.
pub fn harmonic_defect(env: &Environment, chi: &ChiField, theta: &ThetaField) -> f64 {
    let d = env.dim();
    let mut worst: f64 = 0.0;
    for x in theta.field.window().sites() {
        let pi = env.pi(x);
        let g = |y: &Site, i: usize| y.get(i) as f64 + chi.padded.at(y, i) - theta.field.at(y, i);
        for i in 0..d {
            let gx = g(&x, i);
            let mut s = 0.0;
            for axis in 0..d {
                let up = x.offset(axis, 1);
                let down = x.offset(axis, -1);
                s += env.c_plus(x, axis) * (g(&up, i) - gx) + env.c_minus(x, axis) * (g(&down, i) - gx);
            }
            worst = worst.max((s / pi).abs());
        }
    }
    worst
}
