//! Exceedance probabilities `P(osc_{B^(n)}([0, T], delta) > eps)` of the
//! diffusively rescaled path.

use condlab_core::stats::mean;
use condlab_core::walk::{rescale, simulate};
use condlab_core::{Environment, Site};
use serde::Serialize;

use super::{invalid, nonincreasing, Outcome, Proportion, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationConfig {
    pub x0: Vec<i64>,
    pub n_list: Vec<usize>,
    pub t_end: f64,
    pub delta_list: Vec<f64>,
    pub eps: f64,
    pub replication: Replication,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationRow {
    pub n: usize,
    pub delta: f64,
    pub exceedance: Proportion,
    pub mean_oscillation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationReport {
    pub replicas: usize,
    pub eps: f64,
    pub t_end: f64,
    pub rows: Vec<OscillationRow>,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn run(env: &Environment, cfg: &OscillationConfig, pool: &Pool) -> Result<Outcome<OscillationReport>> {
    cfg.replication.check()?;
    if !(cfg.t_end >= 1.0) {
        return Err(invalid("T must be at least 1").into());
    }
    if cfg.delta_list.is_empty() || cfg.delta_list.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(invalid("delta_list entries must lie in (0, 1)").into());
    }
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
        return Err(invalid("n_list must be nonempty with entries >= 1").into());
    }
    let x0 = Site::new(&cfg.x0)?;
    // decreasing delta, so the exceedance column should be nonincreasing
    let mut deltas = cfg.delta_list.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let m = cfg.replication.replicas;
    let mut rows = Vec::new();
    let mut monotone = true;
    for &n in &cfg.n_list {
        let steps = (cfg.t_end * n as f64).ceil() as usize;
        let osc = pool.map(m, |i| {
            let path = simulate(env, x0, steps, cfg.replication.seed(i))?;
            let b = rescale(&path, n)?;
            deltas.iter().map(|&d| b.oscillation(cfg.t_end, d)).collect::<condlab_core::Result<Vec<f64>>>()
        })?;
        let mut probs = Vec::with_capacity(deltas.len());
        for (k, &delta) in deltas.iter().enumerate() {
            let col: Vec<f64> = osc.iter().map(|o| o[k]).collect();
            let exceedance = Proportion::new(col.iter().filter(|&&o| o > cfg.eps).count(), m);
            probs.push(exceedance.estimate);
            rows.push(OscillationRow { n, delta, exceedance, mean_oscillation: mean(&col) });
        }
        monotone &= nonincreasing(&probs, 0.0);
    }
    let mut table = Table::new(&["n", "delta", "exceedances", "trials", "probability", "wilson_lo", "wilson_hi", "mean_oscillation"]);
    for r in &rows {
        table.push(vec![
            Cell::from(r.n),
            r.delta.into(),
            Cell::from(r.exceedance.successes),
            Cell::from(r.exceedance.trials),
            r.exceedance.estimate.into(),
            r.exceedance.lo.into(),
            r.exceedance.hi.into(),
            r.mean_oscillation.into(),
        ]);
    }
    let report = OscillationReport {
        replicas: m,
        eps: cfg.eps,
        t_end: cfg.t_end,
        rows,
        pass: Some(monotone),
        warnings: Vec::new(),
    };
    Ok(Outcome { report, table })
}
