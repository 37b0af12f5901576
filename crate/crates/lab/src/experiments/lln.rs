//! Zero-speed check: the fraction of walks with `|X_n - x0|_2 / n > delta`.
//! All values of `n` are read off one trajectory per replica.

use condlab_core::walk::Walker;
use condlab_core::{Environment, Site};
use serde::Serialize;

use super::{invalid, nonincreasing, Outcome, Proportion, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnConfig {
    pub x0: Vec<i64>,
    pub n_list: Vec<usize>,
    pub delta: f64,
    pub replication: Replication,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub exceedance: Proportion,
    pub mean_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnReport {
    pub replicas: usize,
    pub delta: f64,
    pub rows: Vec<LlnRow>,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn run(env: &Environment, cfg: &LlnConfig, pool: &Pool) -> Result<Outcome<LlnReport>> {
    cfg.replication.check()?;
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_list must be strictly increasing with entries >= 1").into());
    }
    if !(cfg.delta > 0.0) {
        return Err(invalid("delta must be positive").into());
    }
    let x0 = Site::new(&cfg.x0)?;
    let m = cfg.replication.replicas;
    let speeds = pool.map(m, |i| {
        let mut w = Walker::new(env, x0, cfg.replication.seed(i))?;
        let mut out = Vec::with_capacity(cfg.n_list.len());
        let mut k = 0;
        for &n in &cfg.n_list {
            let mut x = w.position();
            while k < n {
                x = w.step();
                k += 1;
            }
            let disp = (x - x0).norm_sq() as f64;
            out.push(disp.sqrt() / n as f64);
        }
        Ok(out)
    })?;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for (j, &n) in cfg.n_list.iter().enumerate() {
        let hits = speeds.iter().filter(|s| s[j] > cfg.delta).count();
        let mean_speed = speeds.iter().map(|s| s[j]).sum::<f64>() / m as f64;
        rows.push(LlnRow { n, exceedance: Proportion::new(hits, m), mean_speed });
    }
    let probs: Vec<f64> = rows.iter().map(|r| r.exceedance.estimate).collect();
    let mut table = Table::new(&["n", "exceedances", "trials", "probability", "wilson_lo", "wilson_hi", "mean_speed"]);
    for r in &rows {
        table.push(vec![
            Cell::from(r.n),
            Cell::from(r.exceedance.successes),
            Cell::from(r.exceedance.trials),
            r.exceedance.estimate.into(),
            r.exceedance.lo.into(),
            r.exceedance.hi.into(),
            r.mean_speed.into(),
        ]);
    }
    let report = LlnReport { replicas: m, delta: cfg.delta, rows, pass: Some(nonincreasing(&probs, 0.0)), warnings: Vec::new() };
    Ok(Outcome { report, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_always_exceeds_half() {
        let env = Environment::constant(2, 1.0).unwrap();
        let cfg = LlnConfig { x0: vec![0, 0], n_list: vec![1], delta: 0.5, replication: Replication { replicas: 50, seed_base: 0 } };
        let rep = run(&env, &cfg, &Pool::new(Some(1)).unwrap()).unwrap().report;
        assert_eq!(rep.rows[0].exceedance.estimate, 1.0);
    }

    #[test]
    fn exceedance_vanishes_along_n() {
        let env = Environment::constant(2, 1.0).unwrap();
        let cfg = LlnConfig {
            x0: vec![0, 0],
            n_list: vec![100, 1000, 10_000],
            delta: 0.05,
            replication: Replication { replicas: 200, seed_base: 9 },
        };
        let rep = run(&env, &cfg, &Pool::new(Some(2)).unwrap()).unwrap().report;
        assert_eq!(rep.pass, Some(true));
        assert_eq!(rep.rows[2].exceedance.successes, 0);
        assert!(rep.rows[0].exceedance.estimate > 0.3);
    }
}
