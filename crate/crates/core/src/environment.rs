//! Deterministic conductance environments.
//!
//! An [`Environment`] is an immutable value answering point queries
//! `edge -> conductance`. Nothing is materialized: shifts and perturbations
//! wrap a base environment and rewrite the query.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::lattice::{Edge, Site, MAX_DIM};
use crate::math;
use crate::rng::{hash_edge, unit_f64};
use crate::{Error, Result};

/// Quasiperiodic indices are evaluated exactly for `|k| <= 2^40`.
pub const QUASI_K_MAX: i64 = 1 << 40;

/// Distribution of the hashed i.i.d. conductances.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    /// `v1` with probability `p`, `v2` otherwise.
    TwoPoint { v1: f64, v2: f64, p: f64 },
    /// Pareto law `floor * U^{-1/tail}`, `P(c > t) = (floor/t)^tail`.
    Pareto { tail: f64, floor: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            Distribution::TwoPoint { v1, v2, p } => {
                v1 > 0.0 && v2 > 0.0 && v1.is_finite() && v2.is_finite() && (0.0..=1.0).contains(&p)
            }
            Distribution::Pareto { tail, floor } => tail > 0.0 && floor > 0.0 && floor.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("distribution {self:?} does not produce positive conductances")))
        }
    }

    /// Inverse CDF evaluated at `u` in `[0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * u,
            Distribution::TwoPoint { v1, v2, p } => {
                if u < p {
                    v1
                } else {
                    v2
                }
            }
            Distribution::Pareto { tail, floor } => floor * math::powf(1.0 - u, -1.0 / tail),
        }
    }
}

/// Conductances of one period box `[0, L_1) x ... x [0, L_d)`.
///
/// `values[cell_index * d + axis]` is the conductance of the edge leaving the
/// cell site along `+e_axis`; the cell index is row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicCell {
    periods: Vec<usize>,
    values: Vec<f64>,
}

impl PeriodicCell {
    pub fn new(periods: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let d = periods.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        if periods.iter().any(|&p| p == 0) {
            return Err(Error::invalid("periods must be positive"));
        }
        let cells: usize = periods.iter().product();
        if values.len() != cells * d {
            return Err(Error::invalid(format!(
                "periodic cell needs {} values (cells x dimension), got {}",
                cells * d,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("periodic cell conductance {bad} is not positive")));
        }
        Ok(PeriodicCell { periods, values })
    }

    /// A one-dimensional cell given as consecutive edge conductances.
    pub fn line(values: &[f64]) -> Result<Self> {
        PeriodicCell::new(alloc::vec![values.len()], values.to_vec())
    }

    pub fn periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn lookup(&self, edge: &Edge) -> f64 {
        let d = self.periods.len();
        let mut idx = 0usize;
        for (i, &p) in self.periods.iter().enumerate() {
            idx = idx * p + edge.base.get(i).rem_euclid(p as i64) as usize;
        }
        self.values[idx * d + edge.axis]
    }
}

/// Zero-density rewrite rules for [`Environment::perturb`].
#[derive(Clone, Debug, PartialEq)]
pub enum PerturbRule {
    /// Explicit finite list of edge overrides.
    Edges(BTreeMap<Edge, f64>),
    /// Every edge whose base site has `x_axis == offset` gets `value`.
    Hyperplane { axis: usize, offset: i64, value: f64 },
}

impl PerturbRule {
    #[inline]
    fn apply(&self, edge: &Edge) -> Option<f64> {
        match self {
            PerturbRule::Edges(map) => map.get(edge).copied(),
            PerturbRule::Hyperplane { axis, offset, value } => {
                (edge.base.get(*axis) == *offset).then_some(*value)
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Constant(f64),
    Periodic(PeriodicCell),
    QuasiPeriodic { alphas: Vec<f64>, low: f64, high: f64 },
    HashedIid { dist: Distribution, seed: u64 },
    /// Alternating blocks `|x_i| in [n^e, (n+1)^e)`: `even` for even `n`, `odd` otherwise.
    PowerBlocks { exponent: f64, even: f64, odd: f64 },
    Scaled { base: Arc<Environment>, factor: f64 },
    Perturbed { base: Arc<Environment>, rule: PerturbRule },
    Shifted { base: Arc<Environment>, offset: Site },
}

/// A deterministic conductance configuration on `Z^d`.
#[derive(Clone, Debug)]
pub struct Environment {
    dim: usize,
    kind: Kind,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(Error::UnsupportedDimension(d))
    } else {
        Ok(())
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} is not a positive conductance")))
    }
}

impl Environment {
    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        check_dim(dim)?;
        check_positive("constant value", value)?;
        Ok(Environment { dim, kind: Kind::Constant(value) })
    }

    pub fn periodic(cell: PeriodicCell) -> Result<Self> {
        Ok(Environment { dim: cell.periods.len(), kind: Kind::Periodic(cell) })
    }

    /// `c(x + k e_i, x + (k+1) e_i) = high` if `floor(alpha_i k)` is even, `low` otherwise.
    pub fn quasi_periodic(alphas: Vec<f64>, low: f64, high: f64) -> Result<Self> {
        check_dim(alphas.len())?;
        if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("quasiperiodic alphas must lie in (0, 1)"));
        }
        check_positive("low", low)?;
        check_positive("high", high)?;
        Ok(Environment { dim: alphas.len(), kind: Kind::QuasiPeriodic { alphas, low, high } })
    }

    /// The golden-ratio rotation `alpha = (sqrt 5 - 1)/2` on every axis, values 1 and 2.
    pub fn golden(dim: usize) -> Result<Self> {
        let alpha = (math::sqrt(5.0) - 1.0) / 2.0;
        Environment::quasi_periodic(alloc::vec![alpha; dim], 1.0, 2.0)
    }

    pub fn hashed_iid(dim: usize, dist: Distribution, seed: u64) -> Result<Self> {
        check_dim(dim)?;
        dist.validate()?;
        Ok(Environment { dim, kind: Kind::HashedIid { dist, seed } })
    }

    /// Blocks of growing length along every axis; with `exponent = 1.5`,
    /// `even = 1`, `odd = 2` in `d = 1` this is an averaging environment whose
    /// limiting law is a mixture of two point masses (not ergodic).
    pub fn power_blocks(dim: usize, exponent: f64, even: f64, odd: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::invalid("power-block exponent must exceed 1"));
        }
        check_positive("even", even)?;
        check_positive("odd", odd)?;
        Ok(Environment { dim, kind: Kind::PowerBlocks { exponent, even, odd } })
    }

    /// All conductances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        check_positive("scale factor", factor)?;
        Ok(Environment { dim: self.dim, kind: Kind::Scaled { base: Arc::new(self.clone()), factor } })
    }

    pub fn perturb(&self, rule: PerturbRule) -> Result<Self> {
        match &rule {
            PerturbRule::Edges(map) => {
                for (e, v) in map {
                    self.check_edge(e)?;
                    check_positive("override", *v)?;
                }
            }
            PerturbRule::Hyperplane { axis, value, .. } => {
                if *axis >= self.dim {
                    return Err(Error::AxisOutOfRange { axis: *axis, dim: self.dim });
                }
                check_positive("override", *value)?;
            }
        }
        Ok(Environment { dim: self.dim, kind: Kind::Perturbed { base: Arc::new(self.clone()), rule } })
    }

    /// The translate `tau_z`: `shift(z)` queried at `(x, i)` answers `self` at `(x + z, i)`.
    pub fn shift(&self, z: Site) -> Result<Self> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: z.dim() });
        }
        let kind = match &self.kind {
            Kind::Shifted { base, offset } => Kind::Shifted { base: base.clone(), offset: *offset + z },
            _ => Kind::Shifted { base: Arc::new(self.clone()), offset: z },
        };
        Ok(Environment { dim: self.dim, kind })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_edge(&self, e: &Edge) -> Result<()> {
        if e.base.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: e.base.dim() });
        }
        if e.axis >= self.dim {
            return Err(Error::AxisOutOfRange { axis: e.axis, dim: self.dim });
        }
        Ok(())
    }

    /// Conductance of a canonical edge, with all well-formedness checks.
    pub fn conductance(&self, e: &Edge) -> Result<f64> {
        self.check_edge(e)?;
        self.check_range(e)?;
        Ok(self.conductance_unchecked(e))
    }

    fn check_range(&self, e: &Edge) -> Result<()> {
        match &self.kind {
            Kind::QuasiPeriodic { .. } => {
                let k = e.base.get(e.axis);
                if k.abs() > QUASI_K_MAX {
                    return Err(Error::QuasiPeriodicRange(k));
                }
                Ok(())
            }
            Kind::Shifted { base, offset } => {
                base.check_range(&Edge { base: e.base + *offset, axis: e.axis })
            }
            Kind::Perturbed { base, .. } | Kind::Scaled { base, .. } => base.check_range(e),
            _ => Ok(()),
        }
    }

    /// Conductance of the edge joining two nearest neighbors, in either order.
    pub fn conductance_between(&self, x: Site, y: Site) -> Result<f64> {
        let e = Edge::between(x, y).ok_or_else(|| Error::invalid("sites are not nearest neighbors"))?;
        self.conductance(&e)
    }

    /// Hot-path query; the caller guarantees `e` matches the dimension.
    #[inline]
    pub fn conductance_unchecked(&self, e: &Edge) -> f64 {
        match &self.kind {
            Kind::Constant(v) => *v,
            Kind::Periodic(cell) => cell.lookup(e),
            Kind::QuasiPeriodic { alphas, low, high } => {
                if floor_mul(alphas[e.axis], e.base.get(e.axis)) & 1 == 0 {
                    *high
                } else {
                    *low
                }
            }
            Kind::HashedIid { dist, seed } => dist.quantile(unit_f64(hash_edge(*seed, e))),
            Kind::PowerBlocks { exponent, even, odd } => {
                if power_block_index(e.base.get(e.axis).unsigned_abs(), *exponent) & 1 == 0 {
                    *even
                } else {
                    *odd
                }
            }
            Kind::Scaled { base, factor } => factor * base.conductance_unchecked(e),
            Kind::Perturbed { base, rule } => {
                rule.apply(e).unwrap_or_else(|| base.conductance_unchecked(e))
            }
            Kind::Shifted { base, offset } => {
                base.conductance_unchecked(&Edge { base: e.base + *offset, axis: e.axis })
            }
        }
    }

    /// `c(x, x + e_axis)`.
    #[inline]
    pub fn c_plus(&self, x: Site, axis: usize) -> f64 {
        self.conductance_unchecked(&Edge { base: x, axis })
    }

    /// `c(x - e_axis, x)`.
    #[inline]
    pub fn c_minus(&self, x: Site, axis: usize) -> f64 {
        self.conductance_unchecked(&Edge { base: x.offset(axis, -1), axis })
    }

    /// `pi(x)`: total conductance of the `2d` edges at `x`.
    pub fn pi(&self, x: Site) -> f64 {
        (0..self.dim).map(|i| self.c_plus(x, i) + self.c_minus(x, i)).sum()
    }

    /// Periods per axis when the environment is exactly periodic.
    pub fn periods(&self) -> Option<Vec<usize>> {
        match &self.kind {
            Kind::Constant(_) => Some(alloc::vec![1; self.dim]),
            Kind::Periodic(cell) => Some(cell.periods.clone()),
            Kind::Scaled { base, .. } | Kind::Shifted { base, .. } => base.periods(),
            _ => None,
        }
    }

    /// Underlying periodic cell, if any (looking through scaling is not attempted).
    pub fn periodic_cell(&self) -> Option<&PeriodicCell> {
        match &self.kind {
            Kind::Periodic(cell) => Some(cell),
            _ => None,
        }
    }

    /// Short human-readable description of the construction.
    pub fn describe(&self) -> alloc::string::String {
        match &self.kind {
            Kind::Constant(v) => format!("constant(d={}, c={v})", self.dim),
            Kind::Periodic(cell) => format!("periodic(periods={:?})", cell.periods),
            Kind::QuasiPeriodic { alphas, low, high } => {
                format!("quasiperiodic(alphas={alphas:?}, low={low}, high={high})")
            }
            Kind::HashedIid { dist, seed } => format!("hashed-iid(d={}, {dist:?}, seed={seed})", self.dim),
            Kind::PowerBlocks { exponent, even, odd } => {
                format!("power-blocks(d={}, exponent={exponent}, even={even}, odd={odd})", self.dim)
            }
            Kind::Scaled { base, factor } => format!("{factor} * {}", base.describe()),
            Kind::Perturbed { base, rule } => match rule {
                PerturbRule::Edges(m) => format!("perturbed({}, {} edges)", base.describe(), m.len()),
                PerturbRule::Hyperplane { axis, offset, value } => {
                    format!("perturbed({}, x_{axis}={offset} -> {value})", base.describe())
                }
            },
            Kind::Shifted { base, offset } => format!("shift({}, {:?})", base.describe(), offset),
        }
    }
}

/// `floor(alpha * k)` for `|k| <= 2^40`, exact with respect to the `f64` value of `alpha`.
///
/// The rounding error of `alpha * k` is recovered with an FMA; the product can
/// only round across an integer when it lands exactly on it.
#[inline]
pub fn floor_mul(alpha: f64, k: i64) -> i64 {
    let kf = k as f64;
    let p = alpha * kf;
    let fl = math::floor(p);
    if fl == p {
        let err = math::fma(alpha, kf, -p);
        if err < 0.0 {
            return fl as i64 - 1;
        }
    }
    fl as i64
}

/// The `n` with `n^e <= m < (n+1)^e`.
fn power_block_index(m: u64, exponent: f64) -> u64 {
    let mf = m as f64;
    let mut n = math::floor(math::powf(mf, 1.0 / exponent)) as u64;
    while n > 0 && math::powf(n as f64, exponent) > mf {
        n -= 1;
    }
    while math::powf((n + 1) as f64, exponent) <= mf {
        n += 1;
    }
    n
}
