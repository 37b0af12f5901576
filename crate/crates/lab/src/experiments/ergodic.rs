//! Walk time averages of a local observable against the spatial prediction
//! `sum pi f / sum pi` over a box.

use condlab_core::stats::{mean, std_error, CompensatedSum};
use condlab_core::walk::{predicted_time_average, walk_time_average};
use condlab_core::{Environment, LocalObservable, Site};
use serde::Serialize;

use super::{invalid, Outcome, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicConfig {
    pub x0: Vec<i64>,
    pub n: usize,
    pub replication: Replication,
    /// Box radius of the spatial prediction.
    pub r_pred: usize,
    /// Allowed gap in standard errors, on top of twice the prediction's own
    /// drift between radii `r_pred / 2` and `r_pred` (covers an `O(1/r)` bias).
    pub z_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub n: usize,
    pub replicas: usize,
    pub time_average_mean: f64,
    pub time_average_std_error: f64,
    pub prediction: f64,
    pub prediction_half_radius: f64,
    pub gap: f64,
    /// `gap / std_error`, NaN when the standard error vanishes.
    pub z: f64,
    /// Mean over replicas of `|time average - prediction|`.
    pub l1_deviation: f64,
    pub tolerance: f64,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn run(env: &Environment, f: &LocalObservable, cfg: &ErgodicConfig, pool: &Pool) -> Result<Outcome<ErgodicReport>> {
    cfg.replication.check()?;
    if cfg.n == 0 || cfg.r_pred < 2 {
        return Err(invalid("need n >= 1 and r_pred >= 2").into());
    }
    let x0 = Site::new(&cfg.x0)?;
    let averages = pool.map(cfg.replication.replicas, |i| walk_time_average(env, x0, cfg.n, cfg.replication.seed(i), f))?;
    let prediction = predicted_time_average(env, f, cfg.r_pred)?;
    let prediction_half_radius = predicted_time_average(env, f, cfg.r_pred / 2)?;
    let m = averages.len();
    let mu = mean(&averages);
    let se = if m >= 2 { std_error(&averages) } else { f64::NAN };
    let gap = (mu - prediction).abs();
    let z = if se > 0.0 { gap / se } else { f64::NAN };
    let l1: CompensatedSum = averages.iter().map(|a| (a - prediction).abs()).collect();
    let l1_deviation = l1.value() / m as f64;
    let mut warnings = Vec::new();
    let tolerance = cfg.z_max * if se.is_nan() { 0.0 } else { se } + 2.0 * (prediction - prediction_half_radius).abs();
    let pass = if m < 2 {
        warnings.push("one replica: no standard error; pass/fail not assessed".to_string());
        None
    } else {
        Some(gap <= tolerance)
    };
    let mut table = Table::new(&["replica", "seed", "time_average", "deviation"]);
    for (i, a) in averages.iter().enumerate() {
        table.push(vec![Cell::from(i), Cell::from(cfg.replication.seed(i)), (*a).into(), (a - prediction).into()]);
    }
    let report = ErgodicReport {
        n: cfg.n,
        replicas: m,
        time_average_mean: mu,
        time_average_std_error: se,
        prediction,
        prediction_half_radius,
        gap,
        z,
        l1_deviation,
        tolerance,
        pass,
        warnings,
    };
    Ok(Outcome { report, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use condlab_core::PeriodicCell;

    fn cfg(n: usize, m: usize) -> ErgodicConfig {
        ErgodicConfig { x0: vec![0], n, replication: Replication { replicas: m, seed_base: 3 }, r_pred: 1000, z_max: 3.0 }
    }

    #[test]
    fn constant_environment_has_zero_gap() {
        let env = Environment::constant(1, 2.0).unwrap();
        let out = run(&env, &LocalObservable::Conductance { axis: 0 }, &cfg(100, 5), &Pool::new(Some(1)).unwrap()).unwrap();
        assert_eq!(out.report.gap, 0.0);
        assert_eq!(out.report.pass, Some(true));
    }

    #[test]
    fn period_two_matches_and_cap_is_inactive() {
        let env = Environment::periodic(PeriodicCell::line(&[1.0, 2.0]).unwrap()).unwrap();
        let pool = Pool::new(Some(2)).unwrap();
        let f = LocalObservable::Conductance { axis: 0 };
        let a = run(&env, &f, &cfg(10_000, 40), &pool).unwrap().report;
        assert_eq!(a.pass, Some(true), "{a:?}");
        let b = run(&env, &f.clone().capped(5.0), &cfg(10_000, 40), &pool).unwrap().report;
        assert_eq!(a.gap, b.gap);
    }
}
