//! Replicated Monte Carlo experiments. Each one takes a typed config and
//! returns a serializable report plus a data table; replica `i` always uses
//! seed `seed_base + i`.

pub mod conversion;
pub mod ergodic;
pub mod exit_tail;
pub mod heat_kernel;
pub mod iip;
pub mod lln;
pub mod oscillation;

use condlab_core::{Error, Site};
use serde::Serialize;

use crate::io::Table;

/// Replication parameters shared by every experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replication {
    /// Number of replicas `M`.
    pub replicas: usize,
    pub seed_base: u64,
}

impl Replication {
    pub fn seed(&self, i: usize) -> u64 {
        self.seed_base.wrapping_add(i as u64)
    }

    fn check(&self) -> condlab_core::Result<()> {
        if self.replicas == 0 {
            return Err(invalid("replicas must be at least 1"));
        }
        Ok(())
    }
}

pub struct Outcome<R> {
    pub report: R,
    pub table: Table,
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn coords(x: &Site) -> Vec<i64> {
    x.coords().to_vec()
}

/// Proportion with its 95% Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lo, hi) = condlab_core::stats::wilson_interval(successes, trials, 1.96);
        Proportion { successes, trials, estimate: successes as f64 / trials.max(1) as f64, lo, hi }
    }
}

/// Slope of `ln y` against `ln x` over the points with positive coordinates.
pub(crate) fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).unzip();
    condlab_core::stats::linear_fit(&xs, &ys).map(|(slope, _)| slope)
}

/// True when consecutive entries never increase by more than `slack`.
pub(crate) fn nonincreasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}
