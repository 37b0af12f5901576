//! Dirichlet energies of stationary edge fields and the effective covariance.
//!
//! The energy of `h` against an edge field `v` on a window is
//! `sum_{e} c(e) (v(e) - grad h(e))^2`, one term per undirected edge, with
//! `grad h(x, y) = h(y) - h(x)` and `h = 0` off the unknowns. It is minimized
//! through the normal equations, assembled edge by edge into a sparse matrix.
//! This path shares no code with [`crate::solver::quadratic_form`], which
//! makes the identity check in [`lemma35_check`] a genuine comparison.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::segment_edge_average;
use crate::environment::Environment;
use crate::lattice::{Edge, Site};
use crate::observable::{EnvView, LocalObservable};
use crate::solver::{pcg, quadratic_form, Boundary, CsrMatrix, LatticeField, SolveReport, SolverOptions, Window};
use crate::stats::{symmetric_eigenvalues, CompensatedSum};
use crate::{Error, Result};

/// `v o tau_x` on the edge `(x, x + e_i)`, oriented from `x` to `x + e_i`.
#[derive(Clone, Debug)]
pub enum StationaryEdgeField {
    /// `v(x, x + e_i) = a_i`.
    Constant(Vec<f64>),
    /// `v(x, x + e_i) = v_i(tau_x omega)`.
    Local(Vec<LocalObservable>),
}

impl StationaryEdgeField {
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut a = vec![0.0; dim];
        a[axis] = 1.0;
        StationaryEdgeField::Constant(a)
    }

    pub fn dim(&self) -> usize {
        match self {
            StationaryEdgeField::Constant(a) => a.len(),
            StationaryEdgeField::Local(v) => v.len(),
        }
    }

    pub fn radius(&self) -> usize {
        match self {
            StationaryEdgeField::Constant(_) => 0,
            StationaryEdgeField::Local(v) => v.iter().map(LocalObservable::radius).max().unwrap_or(0),
        }
    }

    #[inline]
    pub fn eval(&self, env: &Environment, x: Site, axis: usize) -> f64 {
        match self {
            StationaryEdgeField::Constant(a) => a[axis],
            StationaryEdgeField::Local(v) => v[axis].eval(&EnvView::new(env, x)),
        }
    }

    /// `v(x, y)` for nearest neighbors, antisymmetric in the orientation.
    pub fn directed(&self, env: &Environment, x: Site, y: Site) -> Result<f64> {
        let e = Edge::between(x, y).ok_or_else(|| Error::invalid("sites are not nearest neighbors"))?;
        let v = self.eval(env, e.base, e.axis);
        Ok(if e.base == x { v } else { -v })
    }

    fn check(&self, env: &Environment, radius: Option<usize>) -> Result<()> {
        if self.dim() != env.dim() {
            return Err(Error::DimensionMismatch { expected: env.dim(), got: self.dim() });
        }
        if let (Some(r), StationaryEdgeField::Local(_)) = (radius, self) {
            if r < self.radius() {
                return Err(Error::Sizing { radius: r, needed: self.radius() });
            }
        }
        Ok(())
    }
}

/// Edge data of an energy problem: conductance, field value and the unknown
/// indices of both endpoints.
struct EdgeTerm {
    c: f64,
    v: f64,
    tail: Option<usize>,
    head: Option<usize>,
}

fn edge_terms(env: &Environment, edges: &Window, unknowns: &Window, v: &StationaryEdgeField) -> Result<Vec<EdgeTerm>> {
    edges
        .edges()
        .into_iter()
        .map(|e| {
            Ok(EdgeTerm {
                c: env.conductance(&e)?,
                v: v.eval(env, e.base, e.axis),
                tail: unknowns.index(&e.base),
                head: unknowns.index(&e.head()),
            })
        })
        .collect()
}

fn assemble(n: usize, terms: &[EdgeTerm]) -> (CsrMatrix, Vec<f64>) {
    let mut trip = Vec::with_capacity(4 * terms.len());
    let mut b = vec![0.0; n];
    for t in terms {
        if t.tail.is_some() && t.tail == t.head {
            continue;
        }
        if let Some(i) = t.tail {
            trip.push((i, i, t.c));
            b[i] -= t.c * t.v;
        }
        if let Some(j) = t.head {
            trip.push((j, j, t.c));
            b[j] += t.c * t.v;
        }
        if let (Some(i), Some(j)) = (t.tail, t.head) {
            trip.push((i, j, -t.c));
            trip.push((j, i, -t.c));
        }
    }
    (CsrMatrix::from_triplets(n, trip), b)
}

fn energy_of(terms: &[EdgeTerm], h: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let g = t.head.map_or(0.0, |j| h[j]) - t.tail.map_or(0.0, |i| h[i]);
            t.c * (t.v - g) * (t.v - g)
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Normal equations `A h = b` of the energy minimization over the edges of
/// `window` with unknowns on its sites. Exposed for dense cross-checks.
pub fn normal_equations(env: &Environment, window: &Window, v: &StationaryEdgeField) -> Result<(CsrMatrix, Vec<f64>)> {
    v.check(env, window.radius())?;
    let terms = edge_terms(env, window, window, v)?;
    Ok(assemble(window.len(), &terms))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyResult {
    /// Radius of the centered window; `None` on a torus.
    pub radius: Option<usize>,
    /// `inf_h sum_e c (v - grad h)^2`.
    pub value: f64,
    /// `value / |Lambda|`.
    pub per_site: f64,
    /// `value / sum_{Lambda} pi`.
    pub per_pi: f64,
    /// Energy of `h = 0`, i.e. `sum_e c v^2`.
    pub unminimized: f64,
    /// Minimizer on the window (zero off the unknowns).
    pub minimizer: LatticeField,
    pub report: SolveReport,
}

fn minimize(env: &Environment, edges: &Window, unknowns: &Window, v: &StationaryEdgeField, tol: f64) -> Result<EnergyResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    v.check(env, edges.radius())?;
    let terms = edge_terms(env, edges, unknowns, v)?;
    let (a, b) = assemble(unknowns.len(), &terms);
    let diag: Vec<f64> = (0..a.n()).map(|i| a.get(i, i).max(f64::MIN_POSITIVE)).collect();
    let mut h = vec![0.0; a.n()];
    let cap = SolverOptions::new(tol).cap(unknowns);
    let singular = unknowns.boundary() == Boundary::Periodic;
    let out = pcg(&a, &b, &mut h, &diag, tol, cap, singular);
    let report = SolveReport { iterations: out.iterations, residual: out.residual, converged: out.converged, tolerance: tol }.require()?;
    let value = energy_of(&terms, &h);
    let unminimized = terms.iter().map(|t| t.c * t.v * t.v).collect::<CompensatedSum>().value();
    let sol = LatticeField::scalar(unknowns.clone(), h)?;
    let minimizer = if unknowns == edges { sol } else { sol.restrict(edges) };
    let pi_total: CompensatedSum = edges.sites().map(|x| env.pi(x)).collect();
    Ok(EnergyResult {
        radius: edges.radius(),
        value,
        per_site: value / edges.len() as f64,
        per_pi: value / pi_total.value(),
        unminimized,
        minimizer,
        report,
    })
}

/// `inf_h sum_{e in E(Lambda_r)} c(e) (v(e) - grad h(e))^2` over `h` vanishing off `Lambda_r`.
pub fn dirichlet_energy(env: &Environment, r: usize, v: &StationaryEdgeField, tol: f64) -> Result<EnergyResult> {
    let w = Window::centered(env.dim(), r)?;
    minimize(env, &w, &w, v, tol)
}

/// As [`dirichlet_energy`], with the minimizer restricted to `Lambda_s`, `s <= r`.
pub fn dirichlet_energy_restricted(env: &Environment, r: usize, s: usize, v: &StationaryEdgeField, tol: f64) -> Result<EnergyResult> {
    if s > r {
        return Err(Error::invalid("support radius exceeds window radius"));
    }
    let w = Window::centered(env.dim(), r)?;
    let inner = Window::centered(env.dim(), s)?;
    minimize(env, &w, &inner, v, tol)
}

/// Energy of an explicit trial `h` (on `Lambda_r`, zero outside) over `E(Lambda_r)`.
pub fn trial_energy(env: &Environment, v: &StationaryEdgeField, h: &LatticeField) -> Result<f64> {
    let w = h.window();
    v.check(env, w.radius())?;
    let terms = edge_terms(env, w, w, v)?;
    Ok(energy_of(&terms, &h.component(0)))
}

/// `inf` on a torus whose sides are the environment's periods, per cell site.
pub fn periodic_cell_energy(env: &Environment, v: &StationaryEdgeField, tol: f64) -> Result<EnergyResult> {
    let periods = env.periods().ok_or(Error::NotPeriodic(0))?;
    let torus = Window::torus(&periods)?;
    minimize(env, &torus, &torus, v, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma35 {
    /// `<f, (-L)^{-1} f>_{l^2(Lambda, pi)}` with `f = pi^{-1} sum_y c(., y) v(., y)`.
    pub lhs: f64,
    /// `sum_{E(Lambda)} c v^2 - E_Lambda(v)`.
    pub rhs: f64,
    pub gap: f64,
}

/// `f(x) = pi(x)^{-1} sum_{y ~ x} c(x, y) v(x, y)` on `Lambda_r`.
pub fn weighted_divergence(env: &Environment, window: &Window, v: &StationaryEdgeField) -> LatticeField {
    LatticeField::from_fn(window.clone(), 1, |x, _| {
        let mut s = 0.0;
        for i in 0..env.dim() {
            s += env.c_plus(x, i) * v.eval(env, x, i);
            s -= env.c_minus(x, i) * v.eval(env, x.offset(i, -1), i);
        }
        s / env.pi(x)
    })
}

/// Both sides of the finite-volume energy identity, computed independently.
pub fn lemma35_check(env: &Environment, r: usize, v: &StationaryEdgeField, tol: f64) -> Result<Lemma35> {
    let w = Window::centered(env.dim(), r)?;
    v.check(env, Some(r))?;
    let f = weighted_divergence(env, &w, v);
    let lhs = quadratic_form(env, &w, &f, tol)?.value;
    let e = minimize(env, &w, &w, v, tol)?;
    let rhs = e.unminimized - e.value;
    Ok(Lemma35 { lhs, rhs, gap: (lhs - rhs).abs() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub radius: usize,
    pub per_site: f64,
    /// `|per_site - previous per_site|`; zero on the first row.
    pub gap_to_previous: f64,
    pub report: SolveReport,
}

/// Normalized Dirichlet energies along increasing radii.
pub fn energy_scan(env: &Environment, radii: &[usize], v: &StationaryEdgeField, tol: f64) -> Result<Vec<ScanRow>> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let mut rows: Vec<ScanRow> = Vec::with_capacity(radii.len());
    for &r in radii {
        let e = dirichlet_energy(env, r, v, tol)?;
        let gap = rows.last().map_or(0.0, |p| (e.per_site - p.per_site).abs());
        rows.push(ScanRow { radius: r, per_site: e.per_site, gap_to_previous: gap, report: e.report });
    }
    Ok(rows)
}

/// A symmetric `d x d` estimate of the effective covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    pub dim: usize,
    /// Row-major entries.
    pub entries: Vec<f64>,
    pub r: usize,
    pub boundary: Boundary,
    pub tol: f64,
    pub eigenvalues: Vec<f64>,
}

impl CovMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_psd(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l >= -1e-10)
    }

    /// `a . Sigma a`.
    pub fn quadratic(&self, a: &[f64]) -> f64 {
        (0..self.dim).map(|i| (0..self.dim).map(|j| a[i] * self.get(i, j) * a[j]).sum::<f64>()).sum()
    }
}

/// `q(a) = inf_h sum_e c(e) (a . dx(e) + grad h(e))^2 / sum_e c(e)` over a window.
fn sigma_quadratic(env: &Environment, window: &Window, a: &[f64], tol: f64) -> Result<f64> {
    let v = StationaryEdgeField::Constant(a.iter().map(|x| -x).collect());
    let e = minimize(env, window, window, &v, tol)?;
    let total: CompensatedSum = window.edges().iter().map(|e| env.conductance_unchecked(e)).collect();
    Ok(e.value / total.value())
}

/// Effective covariance from the finite-volume variational problem, off-diagonal
/// entries by polarization.
///
/// Dirichlet mode minimizes over `h` vanishing off `Lambda_r`; periodic mode
/// works on the torus of side `r` along every axis, which must be a multiple
/// of the environment's periods.
pub fn effective_sigma(env: &Environment, r: usize, tol: f64, boundary: Boundary) -> Result<CovMatrix> {
    let d = env.dim();
    if r == 0 {
        return Err(Error::invalid("radius must be at least 1"));
    }
    let window = match boundary {
        Boundary::Dirichlet => Window::centered(d, r)?,
        Boundary::Periodic => {
            let periods = env.periods().ok_or(Error::NotPeriodic(r))?;
            if periods.iter().any(|p| r % p != 0) {
                return Err(Error::NotPeriodic(r));
            }
            Window::torus(&vec![r; d])?
        }
    };
    let mut diag = vec![0.0; d];
    for (i, q) in diag.iter_mut().enumerate() {
        let mut a = vec![0.0; d];
        a[i] = 1.0;
        *q = sigma_quadratic(env, &window, &a, tol)?;
    }
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        entries[i * d + i] = diag[i];
        for j in i + 1..d {
            let mut a = vec![0.0; d];
            a[i] = 1.0;
            a[j] = 1.0;
            let q = sigma_quadratic(env, &window, &a, tol)?;
            let s = 0.5 * (q - diag[i] - diag[j]);
            entries[i * d + j] = s;
            entries[j * d + i] = s;
        }
    }
    let eigenvalues = symmetric_eigenvalues(&entries, d);
    Ok(CovMatrix { dim: d, entries, r, boundary, tol, eigenvalues })
}

/// `1 / (mean(c) mean(1/c))` over the `2 r_norm` edges of `[-r_norm, r_norm]`.
pub fn sigma_1d_exact(env: &Environment, r_norm: usize) -> Result<f64> {
    let mc = segment_edge_average(env, r_norm, |c| c)?;
    let mi = segment_edge_average(env, r_norm, |c| 1.0 / c)?;
    Ok(1.0 / (mc * mi))
}
