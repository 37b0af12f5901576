//! Spatial block averages and the finite-radius diagnostics built on them.

use alloc::vec::Vec;

use crate::environment::Environment;
use crate::lattice::{Edge, Site};
use crate::observable::{EnvView, LocalObservable};
use crate::solver::Window;
use crate::stats::CompensatedSum;
use crate::{math, Error, Result};

fn check_observable(env: &Environment, f: &LocalObservable) -> Result<()> {
    if let Some(axis) = f.max_axis() {
        if axis >= env.dim() {
            return Err(Error::AxisOutOfRange { axis, dim: env.dim() });
        }
    }
    Ok(())
}

/// `|Lambda_r|^{-1} sum_{x in Lambda_r} f(tau_x omega)` with `Lambda_r = [-r, r]^d`.
pub fn block_average(env: &Environment, f: &LocalObservable, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("block radius must be at least 1"));
    }
    check_observable(env, f)?;
    let w = Window::centered(env.dim(), r)?;
    let s: CompensatedSum = w.sites().map(|x| f.eval(&EnvView::new(env, x))).collect();
    Ok(s.value() / w.len() as f64)
}

/// Average of `g(c(x, x+1))` over the `2r` edges inside the segment `[-r, r]`
/// of a one-dimensional environment (bases `-r..r`).
pub fn segment_edge_average(env: &Environment, r: usize, g: impl Fn(f64) -> f64) -> Result<f64> {
    if env.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: env.dim() });
    }
    if r == 0 {
        return Err(Error::invalid("segment radius must be at least 1"));
    }
    let r = r as i64;
    let s: CompensatedSum = (-r..r)
        .map(|x| g(env.conductance_unchecked(&Edge { base: Site::from_array([x, 0, 0, 0], 1), axis: 0 })))
        .collect();
    Ok(s.value() / (2 * r) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragingRow {
    pub radius: usize,
    pub average: f64,
    /// `|average - average at the largest radius|`.
    pub gap_to_final: f64,
    /// `|average - previous average|`; zero on the first row.
    pub increment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragingDiagnostic {
    pub rows: Vec<AveragingRow>,
    /// Mean shrink factor of the increments over the last three radius steps.
    pub shrink_factor: f64,
    pub non_averaging_suspected: bool,
}

/// Increments below this are treated as converged outright.
const INCREMENT_FLOOR: f64 = 1e-13;
/// Required mean shrink factor of successive increments.
pub const SHRINK_FACTOR: f64 = 1.5;

/// Block averages along increasing radii with Cauchy-style gaps.
///
/// Convergence is declared when the increments over the last three radius
/// steps (nominally doublings) shrink by a mean factor of at least
/// [`SHRINK_FACTOR`], or are all negligible. Needs at least four radii for a
/// verdict; with fewer it never flags.
pub fn averaging_diagnostic(env: &Environment, f: &LocalObservable, radii: &[usize]) -> Result<AveragingDiagnostic> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let avgs = radii.iter().map(|&r| block_average(env, f, r)).collect::<Result<Vec<_>>>()?;
    let last = *avgs.last().ok_or_else(|| Error::invalid("no radii given"))?;
    let rows: Vec<AveragingRow> = radii
        .iter()
        .zip(&avgs)
        .enumerate()
        .map(|(i, (&radius, &average))| AveragingRow {
            radius,
            average,
            gap_to_final: (average - last).abs(),
            increment: if i == 0 { 0.0 } else { (average - avgs[i - 1]).abs() },
        })
        .collect();
    let incs: Vec<f64> = rows.iter().skip(1).map(|r| r.increment).collect();
    let (shrink_factor, suspected) = if incs.len() < 3 {
        (f64::NAN, false)
    } else {
        let tail = &incs[incs.len() - 3..];
        if tail.iter().all(|&d| d <= INCREMENT_FLOOR) {
            (f64::INFINITY, false)
        } else if tail[2] <= INCREMENT_FLOOR {
            (f64::INFINITY, false)
        } else {
            let factor = math::sqrt(tail[0] / tail[2]);
            (factor, !(factor >= SHRINK_FACTOR))
        }
    };
    Ok(AveragingDiagnostic { rows, shrink_factor, non_averaging_suspected: suspected })
}

/// Per-radius sums `n^{-d} sum_{e in E(Lambda_n)} c(e)^p` and `... c(e)^{-q}`.
///
/// Each undirected edge of `E(Lambda_n)` is counted once.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub p: f64,
    pub q: f64,
    pub dim: usize,
    pub radii: Vec<usize>,
    pub p_block_sums: Vec<f64>,
    pub q_block_sums: Vec<f64>,
    pub p_sup: f64,
    pub q_sup: f64,
    /// Neither sequence grows past [`MOMENT_GROWTH_TOLERANCE`] times its
    /// earlier supremum at the largest radius.
    pub bounded: bool,
    /// `p, q > 1` and, for `d >= 2`, `1/p + 1/q < 2/d`.
    pub exponents_admissible: bool,
    pub admissible: bool,
}

pub const MOMENT_GROWTH_TOLERANCE: f64 = 1.5;

/// `1/p + 1/q < 2/d` for `d >= 2`, together with `p, q > 1`.
pub fn exponents_admissible(p: f64, q: f64, d: usize) -> bool {
    p > 1.0 && q > 1.0 && (d < 2 || 1.0 / p + 1.0 / q < 2.0 / d as f64)
}

/// Powers of two below `r_max`, then `r_max` itself.
pub fn dyadic_radii(r_max: usize) -> Vec<usize> {
    let mut radii = Vec::new();
    let mut r = 1;
    while r < r_max {
        radii.push(r);
        r *= 2;
    }
    radii.push(r_max.max(1));
    radii
}

fn edge_sums(env: &Environment, n: usize, mut each: impl FnMut(f64)) -> Result<()> {
    let w = Window::centered(env.dim(), n)?;
    for e in w.edges() {
        each(env.conductance_unchecked(&e));
    }
    Ok(())
}

pub fn moment_report(env: &Environment, p: f64, q: f64, r_max: usize) -> Result<MomentReport> {
    if !(p > 0.0 && q > 0.0) || r_max == 0 {
        return Err(Error::invalid("moment report needs p, q > 0 and r_max >= 1"));
    }
    let d = env.dim();
    let radii = dyadic_radii(r_max);
    let mut ps = Vec::with_capacity(radii.len());
    let mut qs = Vec::with_capacity(radii.len());
    for &n in &radii {
        let mut sp = CompensatedSum::new();
        let mut sq = CompensatedSum::new();
        edge_sums(env, n, |c| {
            sp.add(math::powf(c, p));
            sq.add(math::powf(c, -q));
        })?;
        let norm = math::powf(n as f64, d as f64);
        ps.push(sp.value() / norm);
        qs.push(sq.value() / norm);
    }
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let grows = |v: &[f64]| match v.split_last() {
        Some((last, earlier)) if !earlier.is_empty() => *last > MOMENT_GROWTH_TOLERANCE * sup(earlier),
        _ => false,
    };
    let bounded = !grows(&ps) && !grows(&qs) && ps.iter().chain(&qs).all(|v| v.is_finite());
    let ok = exponents_admissible(p, q, d);
    Ok(MomentReport {
        p,
        q,
        dim: d,
        p_sup: sup(&ps),
        q_sup: sup(&qs),
        radii,
        p_block_sums: ps,
        q_block_sums: qs,
        bounded,
        exponents_admissible: ok,
        admissible: bounded && ok,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperednessRow {
    pub epsilon: f64,
    /// `n^{-d} sum_{e in E(Lambda_n)} 1{c(e) not in [eps, 1/eps]}` per scanned radius.
    pub densities: Vec<f64>,
    /// Same count divided by `|E(Lambda_n)|`.
    pub fractions: Vec<f64>,
    /// Maximum density over the upper half of the scanned radii.
    pub limsup_proxy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperednessReport {
    pub radii: Vec<usize>,
    pub rows: Vec<TemperednessRow>,
    /// The proxy at the smallest epsilon is positive and no smaller than at the largest.
    pub non_tempered_suspected: bool,
}

/// Finite-radius proxy for the double limit defining tempered configurations.
/// Uses the closed interval `[eps, 1/eps]`.
pub fn temperedness_diagnostic(env: &Environment, eps_grid: &[f64], r_max: usize) -> Result<TemperednessReport> {
    if eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::invalid("epsilon grid points must lie in (0, 1)"));
    }
    if r_max == 0 {
        return Err(Error::invalid("r_max must be at least 1"));
    }
    let d = env.dim();
    let radii = dyadic_radii(r_max);
    let mut counts = alloc::vec![alloc::vec![0usize; radii.len()]; eps_grid.len()];
    let mut totals = alloc::vec![0usize; radii.len()];
    for (k, &n) in radii.iter().enumerate() {
        edge_sums(env, n, |c| {
            totals[k] += 1;
            for (j, &eps) in eps_grid.iter().enumerate() {
                if !(eps <= c && c <= 1.0 / eps) {
                    counts[j][k] += 1;
                }
            }
        })?;
    }
    let upper = radii.len() / 2;
    let rows: Vec<TemperednessRow> = eps_grid
        .iter()
        .zip(&counts)
        .map(|(&epsilon, cnt)| {
            let densities: Vec<f64> = cnt
                .iter()
                .zip(&radii)
                .map(|(&c, &n)| c as f64 / math::powf(n as f64, d as f64))
                .collect();
            let fractions = cnt.iter().zip(&totals).map(|(&c, &t)| c as f64 / t as f64).collect();
            let limsup_proxy = densities[upper..].iter().copied().fold(0.0, f64::max);
            TemperednessRow { epsilon, densities, fractions, limsup_proxy }
        })
        .collect();
    let smallest = rows.iter().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let largest = rows.iter().max_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let non_tempered_suspected = match (smallest, largest) {
        (Some(s), Some(l)) if rows.len() >= 2 => s.limsup_proxy > 0.0 && s.limsup_proxy >= l.limsup_proxy,
        (Some(s), _) => s.limsup_proxy > 0.0,
        _ => false,
    };
    Ok(TemperednessReport { radii, rows, non_tempered_suspected })
}
