//! On-diagonal decay of the continuous-time heat kernel, estimated from the
//! empirical law of `Y_t`, plus a two-start reversibility comparison.

use std::collections::BTreeMap;

use condlab_core::walk::ct_position;
use condlab_core::{Environment, Site};
use serde::Serialize;

use super::{coords, invalid, log_log_slope, Outcome, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatKernelConfig {
    pub x0: Vec<i64>,
    /// Second start for the reversibility check.
    pub partner: Vec<i64>,
    pub t_list: Vec<f64>,
    pub replication: Replication,
    pub slope_slack: f64,
    pub z_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatKernelRow {
    pub t: f64,
    /// `max_y P(Y_t = y) / pi(y)` from `x0`, and the maximizing site.
    pub max_ratio: f64,
    pub argmax: Vec<i64>,
    pub return_ratio: f64,
    pub distinct_sites: usize,
    /// Total empirical mass; one by construction.
    pub mass: f64,
    /// `P_x0(Y_t = partner) / pi(partner)` and `P_partner(Y_t = x0) / pi(x0)`.
    pub forward: f64,
    pub backward: f64,
    pub symmetry_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatKernelReport {
    pub replicas: usize,
    pub dim: usize,
    pub rows: Vec<HeatKernelRow>,
    pub slope: Option<f64>,
    pub slope_threshold: f64,
    pub max_symmetry_z: f64,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

fn histogram(sites: impl Iterator<Item = Site>) -> BTreeMap<Site, usize> {
    let mut h = BTreeMap::new();
    for s in sites {
        *h.entry(s).or_insert(0) += 1;
    }
    h
}

pub fn run(env: &Environment, cfg: &HeatKernelConfig, pool: &Pool) -> Result<Outcome<HeatKernelReport>> {
    cfg.replication.check()?;
    if cfg.t_list.is_empty() || cfg.t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("t_list entries must be positive").into());
    }
    let x = Site::new(&cfg.x0)?;
    let y = Site::new(&cfg.partner)?;
    if x == y {
        return Err(invalid("partner must differ from x0").into());
    }
    let d = env.dim();
    let m = cfg.replication.replicas;
    let mf = m as f64;
    let (pi_x, pi_y) = (env.pi(x), env.pi(y));
    let mut rows = Vec::with_capacity(cfg.t_list.len());
    for &t in &cfg.t_list {
        let ends = pool.map(m, |i| {
            let s = cfg.replication.seed(i);
            Ok((ct_position(env, x, t, s)?.0, ct_position(env, y, t, s)?.0))
        })?;
        let from_x = histogram(ends.iter().map(|e| e.0));
        let mut max_ratio = 0.0;
        let mut argmax = x;
        for (site, &count) in &from_x {
            let q = count as f64 / mf / env.pi(*site);
            if q > max_ratio {
                max_ratio = q;
                argmax = *site;
            }
        }
        let return_ratio = from_x.get(&x).copied().unwrap_or(0) as f64 / mf / pi_x;
        let mass = from_x.values().sum::<usize>() as f64 / mf;
        let p_fwd = ends.iter().filter(|e| e.0 == y).count() as f64 / mf;
        let p_bwd = ends.iter().filter(|e| e.1 == x).count() as f64 / mf;
        let (forward, backward) = (p_fwd / pi_y, p_bwd / pi_x);
        let se = ((p_fwd * (1.0 - p_fwd) / mf) / (pi_y * pi_y) + (p_bwd * (1.0 - p_bwd) / mf) / (pi_x * pi_x)).sqrt();
        let diff = (forward - backward).abs();
        let symmetry_z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(HeatKernelRow {
            t,
            max_ratio,
            argmax: coords(&argmax),
            return_ratio,
            distinct_sites: from_x.len(),
            mass,
            forward,
            backward,
            symmetry_z,
        });
    }
    let slope = log_log_slope(&rows.iter().map(|r| (r.t, r.max_ratio)).collect::<Vec<_>>());
    let slope_threshold = -(d as f64) / 2.0 + cfg.slope_slack;
    let max_symmetry_z = rows.iter().map(|r| r.symmetry_z).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    let pass = match slope {
        Some(s) => Some(s <= slope_threshold && max_symmetry_z <= cfg.z_max),
        None => {
            warnings.push("fewer than two times: slope not fitted, pass/fail not assessed".to_string());
            None
        }
    };
    let mut table = Table::new(&[
        "t", "max_ratio", "return_ratio", "distinct_sites", "mass", "forward", "backward", "symmetry_z",
    ]);
    for r in &rows {
        table.push(vec![
            r.t.into(),
            r.max_ratio.into(),
            r.return_ratio.into(),
            Cell::from(r.distinct_sites),
            r.mass.into(),
            r.forward.into(),
            r.backward.into(),
            r.symmetry_z.into(),
        ]);
    }
    let report = HeatKernelReport { replicas: m, dim: d, rows, slope, slope_threshold, max_symmetry_z, pass, warnings };
    Ok(Outcome { report, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_is_one_and_kernel_decays() {
        let env = Environment::constant(2, 1.0).unwrap();
        let cfg = HeatKernelConfig {
            x0: vec![0, 0],
            partner: vec![1, 0],
            t_list: vec![4.0, 16.0, 64.0],
            replication: Replication { replicas: 20_000, seed_base: 2 },
            slope_slack: 0.3,
            z_max: 4.0,
        };
        let rep = run(&env, &cfg, &Pool::new(Some(2)).unwrap()).unwrap().report;
        assert!(rep.rows.iter().all(|r| r.mass == 1.0));
        assert_eq!(rep.pass, Some(true), "{rep:?}");
    }
}
