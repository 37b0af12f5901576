//! Time-side averages of a nonnegative observable against the `pi`-weighted
//! spatial average over a box of radius `ceil(scale sqrt(n))`.

use condlab_core::stats::{mean, std_error};
use condlab_core::walk::{predicted_time_average, walk_time_average};
use condlab_core::{Environment, LocalObservable, Site};
use serde::Serialize;

use super::{invalid, Outcome, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, Serialize)]
pub struct ConversionConfig {
    pub x0: Vec<i64>,
    pub n_list: Vec<usize>,
    pub replication: Replication,
    pub scale: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConversionRow {
    pub n: usize,
    pub r: usize,
    pub time_side: f64,
    pub time_side_std_error: f64,
    pub space_side: f64,
    /// `time_side / space_side`; absent when both sides vanish.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConversionReport {
    pub replicas: usize,
    pub rows: Vec<ConversionRow>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn run(env: &Environment, f: &LocalObservable, cfg: &ConversionConfig, pool: &Pool) -> Result<Outcome<ConversionReport>> {
    cfg.replication.check()?;
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
        return Err(invalid("n_list must be nonempty with entries >= 1").into());
    }
    if !(cfg.scale > 0.0) {
        return Err(invalid("scale must be positive").into());
    }
    let x0 = Site::new(&cfg.x0)?;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    let mut warnings = Vec::new();
    for &n in &cfg.n_list {
        let r = ((cfg.scale * (n as f64).sqrt()).ceil() as usize).max(1);
        let averages = pool.map(cfg.replication.replicas, |i| walk_time_average(env, x0, n, cfg.replication.seed(i), f))?;
        if averages.iter().any(|&a| a < 0.0) {
            warnings.push(format!("n = {n}: negative time average; the observable should be nonnegative"));
        }
        let time_side = mean(&averages);
        let se = if averages.len() >= 2 { std_error(&averages) } else { f64::NAN };
        let space_side = predicted_time_average(env, f, r)?;
        let ratio = if time_side == 0.0 && space_side == 0.0 { None } else { Some(time_side / space_side) };
        rows.push(ConversionRow { n, r, time_side, time_side_std_error: se, space_side, ratio });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let ratio_min = ratios.iter().copied().reduce(f64::min);
    let ratio_max = ratios.iter().copied().reduce(f64::max);
    let pass = Some(ratios.iter().all(|q| q.is_finite() && (cfg.ratio_lo..=cfg.ratio_hi).contains(q)));
    let mut table = Table::new(&["n", "r", "time_side", "time_side_std_error", "space_side", "ratio"]);
    for row in &rows {
        table.push(vec![
            Cell::from(row.n),
            Cell::from(row.r),
            row.time_side.into(),
            row.time_side_std_error.into(),
            row.space_side.into(),
            row.ratio.map_or(Cell::Text(String::new()), Cell::Float),
        ]);
    }
    let report = ConversionReport { replicas: cfg.replication.replicas, rows, ratio_min, ratio_max, pass, warnings };
    Ok(Outcome { report, table })
}
