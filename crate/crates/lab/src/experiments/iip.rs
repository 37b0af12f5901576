//! Empirical covariance of `X_n / sqrt(n)` against a predicted effective
//! covariance, entry by entry.

use condlab_core::homogenize::{effective_sigma, sigma_1d_exact};
use condlab_core::solver::Boundary;
use condlab_core::stats::{covariance, CompensatedSum};
use condlab_core::walk::Walker;
use condlab_core::{Environment, Site};
use serde::Serialize;

use super::{invalid, Outcome, Replication};
use crate::error::Result;
use crate::io::{Cell, Table};
use crate::pool::Pool;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSource {
    /// `1 / (mean(c) mean(1/c))`, one-dimensional environments only.
    Exact1d { r_norm: usize },
    Periodic { r: usize, tol: f64 },
    Dirichlet { r: usize, tol: f64 },
    /// Row-major `d x d`.
    Given { entries: Vec<f64> },
}

impl SigmaSource {
    pub fn resolve(&self, env: &Environment) -> condlab_core::Result<Vec<f64>> {
        let d = env.dim();
        match self {
            SigmaSource::Exact1d { r_norm } => {
                if d != 1 {
                    return Err(invalid("exact-1d sigma needs a one-dimensional environment"));
                }
                Ok(vec![sigma_1d_exact(env, *r_norm)?])
            }
            SigmaSource::Periodic { r, tol } => Ok(effective_sigma(env, *r, *tol, Boundary::Periodic)?.entries),
            SigmaSource::Dirichlet { r, tol } => Ok(effective_sigma(env, *r, *tol, Boundary::Dirichlet)?.entries),
            SigmaSource::Given { entries } => {
                if entries.len() != d * d {
                    return Err(invalid(format!("given sigma needs {} entries, got {}", d * d, entries.len())));
                }
                if (0..d).any(|i| (0..i).any(|j| entries[i * d + j] != entries[j * d + i])) {
                    return Err(invalid("given sigma must be symmetric"));
                }
                Ok(entries.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IipConfig {
    pub x0: Vec<i64>,
    pub n: usize,
    pub replication: Replication,
    pub sigma: SigmaSource,
    pub z_max: f64,
    /// Below this many replicas the z-test is not applied.
    pub min_replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IipReport {
    pub n: usize,
    pub replicas: usize,
    pub dim: usize,
    /// Sample covariance of `X_n / sqrt(n)`, row-major.
    pub empirical: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `(Sigma_ii Sigma_jj + Sigma_ij^2) / M`, square-rooted.
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    /// `|mean(X_n)| / sqrt(n)` and its standard error.
    pub drift: f64,
    pub drift_std_error: f64,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn run(env: &Environment, cfg: &IipConfig, pool: &Pool) -> Result<Outcome<IipReport>> {
    cfg.replication.check()?;
    if cfg.n == 0 {
        return Err(invalid("n must be at least 1").into());
    }
    let d = env.dim();
    let x0 = Site::new(&cfg.x0)?;
    if x0.dim() != d {
        return Err(condlab_core::Error::DimensionMismatch { expected: d, got: x0.dim() }.into());
    }
    let predicted = cfg.sigma.resolve(env)?;
    let scale = 1.0 / (cfg.n as f64).sqrt();
    let ends = pool.map(cfg.replication.replicas, |i| {
        let mut w = Walker::new(env, x0, cfg.replication.seed(i))?;
        let mut x = x0;
        for _ in 0..cfg.n {
            x = w.step();
        }
        Ok(x)
    })?;
    let samples: Vec<Vec<f64>> =
        ends.iter().map(|x| (0..d).map(|k| (x.get(k) - x0.get(k)) as f64 * scale).collect()).collect();
    let m = samples.len();
    let mut warnings = Vec::new();
    let empirical = if m >= 2 {
        covariance(&samples, d)
    } else {
        warnings.push("one replica: covariance undefined".to_string());
        vec![f64::NAN; d * d]
    };
    let mf = m as f64;
    let mut std_errors = vec![0.0; d * d];
    let mut z_scores = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let k = i * d + j;
            let s = predicted[i * d + j];
            let se = ((predicted[i * d + i] * predicted[j * d + j] + s * s) / mf).sqrt();
            std_errors[k] = se;
            let diff = empirical[k] - s;
            z_scores[k] = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
    }
    let max_abs_z = z_scores.iter().fold(0.0_f64, |a, z| if z.is_nan() { f64::NAN } else { a.max(z.abs()) });
    let means: Vec<f64> =
        (0..d).map(|k| samples.iter().map(|s| s[k]).collect::<CompensatedSum>().value() / mf).collect();
    let drift = means.iter().map(|v| v * v).sum::<f64>().sqrt();
    let trace: f64 = (0..d).map(|k| if m >= 2 { empirical[k * d + k] } else { 0.0 }).sum();
    let drift_std_error = (trace / mf).sqrt();
    let pass = if m < cfg.min_replicas {
        warnings.push(format!(
            "insufficient sample: {m} replicas < {}; pass/fail not assessed",
            cfg.min_replicas
        ));
        None
    } else {
        Some(max_abs_z <= cfg.z_max)
    };

    let mut table = Table::new(&["i", "j", "empirical", "predicted", "std_error", "z"]);
    for i in 0..d {
        for j in 0..d {
            let k = i * d + j;
            table.push(vec![
                Cell::from(i + 1),
                Cell::from(j + 1),
                empirical[k].into(),
                predicted[k].into(),
                std_errors[k].into(),
                z_scores[k].into(),
            ]);
        }
    }
    let report = IipReport {
        n: cfg.n,
        replicas: m,
        dim: d,
        empirical,
        predicted,
        std_errors,
        z_scores,
        max_abs_z,
        drift,
        drift_std_error,
        pass,
        warnings,
    };
    Ok(Outcome { report, table })
}
