//! Command-line front end. Every subcommand reads `[env]` plus its own config
//! section, writes `data.csv`, `summary.json` and `manifest.json` under
//! `<out>/<command>/`, and maps its outcome to an exit status: 0 success,
//! 2 failed assertion, 1 usage or config error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use condlab_core::averaging::{averaging_diagnostic, dyadic_radii, exponents_admissible, moment_report, temperedness_diagnostic};
use condlab_core::corrector::{chi_eps, corrector_1d, harmonic_defect, theta};
use condlab_core::homogenize::{
    dirichlet_energy, dirichlet_energy_restricted, effective_sigma, energy_scan, lemma35_check, periodic_cell_energy,
    sigma_1d_exact, StationaryEdgeField,
};
use condlab_core::solver::Boundary;
use condlab_core::{Environment, LocalObservable};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, Reader};
use crate::envspec::{read_env, read_observable};
use crate::error::{ConfigError, LabError, Result};
use crate::experiments::conversion::{self, ConversionConfig};
use crate::experiments::ergodic::{self, ErgodicConfig};
use crate::experiments::exit_tail::{self, ExitTailConfig};
use crate::experiments::heat_kernel::{self, HeatKernelConfig};
use crate::experiments::iip::{self, IipConfig, SigmaSource};
use crate::experiments::lln::{self, LlnConfig};
use crate::experiments::oscillation::{self, OscillationConfig};
use crate::experiments::{Outcome, Replication};
use crate::io::{field_binary, field_table, write_bytes, write_json, Cell, Manifest, Table};
use crate::pool::Pool;

/// Environment variable naming the output root when `--out` is absent.
pub const OUT_ENV: &str = "CONDLAB_OUT";
pub const DEFAULT_OUT: &str = "condlab-out";

pub const COMMANDS: &[&str] = &[
    "env-report",
    "sigma",
    "sigma-scan",
    "corrector-1d",
    "chi",
    "theta",
    "dirichlet",
    "lemma35",
    "iip",
    "ergodic-avg",
    "conversion",
    "exit-tail",
    "oscillation",
    "lln",
    "heat-kernel",
    "validate",
];

#[derive(Parser, Debug)]
#[command(name = "condlab", version, about = "Random walks among conductances: homogenization numerics and Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Config file, or the name of a bundled config (e.g. `constant-d2`).
    #[arg(short, long)]
    pub config: String,
    /// Seed base; replica `i` uses `seed + i`. Overrides the section's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output root; defaults to $CONDLAB_OUT, then ./condlab-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config override `key=value`; bare keys address the command's section.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Block averages, moment bounds and temperedness of the environment.
    EnvReport(Common),
    /// Effective covariance from the finite-volume variational problem.
    Sigma(Common),
    /// Normalized Dirichlet energies along increasing radii.
    SigmaScan(Common),
    /// Exact one-dimensional corrector.
    #[command(name = "corrector-1d")]
    Corrector1d(Common),
    /// Massive corrector on a padded box.
    Chi(Common),
    /// Second-order corrector and the harmonic-defect check.
    Theta(Common),
    /// Dirichlet energy of a stationary edge field and its minimizer.
    Dirichlet(Common),
    /// Quadratic form against energy identity.
    Lemma35(Common),
    /// Empirical against predicted covariance of the rescaled walk.
    Iip(Common),
    /// Walk time averages against the spatial prediction.
    ErgodicAvg(Common),
    /// Time-side against space-side averages.
    Conversion(Common),
    /// Lower tail of box exit times.
    ExitTail(Common),
    /// Oscillation exceedance of the rescaled path.
    Oscillation(Common),
    /// Zero-speed exceedance fractions.
    Lln(Common),
    /// On-diagonal heat kernel decay.
    HeatKernel(Common),
    /// Schema check, moment preview and cost estimate without running.
    Validate(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EnvReport(_) => "env-report",
            Command::Sigma(_) => "sigma",
            Command::SigmaScan(_) => "sigma-scan",
            Command::Corrector1d(_) => "corrector-1d",
            Command::Chi(_) => "chi",
            Command::Theta(_) => "theta",
            Command::Dirichlet(_) => "dirichlet",
            Command::Lemma35(_) => "lemma35",
            Command::Iip(_) => "iip",
            Command::ErgodicAvg(_) => "ergodic-avg",
            Command::Conversion(_) => "conversion",
            Command::ExitTail(_) => "exit-tail",
            Command::Oscillation(_) => "oscillation",
            Command::Lln(_) => "lln",
            Command::HeatKernel(_) => "heat-kernel",
            Command::Validate(_) => "validate",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::EnvReport(c)
            | Command::Sigma(c)
            | Command::SigmaScan(c)
            | Command::Corrector1d(c)
            | Command::Chi(c)
            | Command::Theta(c)
            | Command::Dirichlet(c)
            | Command::Lemma35(c)
            | Command::Iip(c)
            | Command::ErgodicAvg(c)
            | Command::Conversion(c)
            | Command::ExitTail(c)
            | Command::Oscillation(c)
            | Command::Lln(c)
            | Command::HeatKernel(c)
            | Command::Validate(c) => c,
        }
    }
}

/// A fully parsed command section.
#[derive(Clone, Debug)]
pub enum Job {
    EnvReport { r_max: usize, p: f64, q: f64, eps_grid: Vec<f64>, observable: LocalObservable },
    Sigma { r: usize, tol: f64, boundary: Boundary, exact_r_norm: Option<usize> },
    SigmaScan { radii: Vec<usize>, tol: f64, field: StationaryEdgeField, gap_tol: f64 },
    Corrector1d { n: usize, r_norm: usize, defect_tol: f64 },
    Chi { r: usize, epsilon: f64, tol: f64, residual_tol: f64, dump: bool },
    Theta { r: usize, epsilon: f64, tol: f64, defect_tol: f64 },
    Dirichlet { r: usize, s: Option<usize>, tol: f64, field: StationaryEdgeField, dump: bool },
    Lemma35 { r: usize, tol: f64, field: StationaryEdgeField, gap_tol: f64 },
    Iip(IipConfig),
    Ergodic(ErgodicConfig, LocalObservable),
    Conversion(ConversionConfig, LocalObservable),
    ExitTail(ExitTailConfig),
    Oscillation(OscillationConfig),
    Lln(LlnConfig),
    HeatKernel(HeatKernelConfig),
}

/// What a job produced.
pub struct RunOutput {
    pub summary: Value,
    pub table: Table,
    /// Additional files, relative to the run directory.
    pub extra: Vec<(String, Vec<u8>)>,
    pub pass: Option<bool>,
    pub warnings: Vec<String>,
}

fn replication(r: &mut Reader<'_>, seed: Option<u64>) -> Replication {
    let replicas = r.usize("replicas");
    let file_seed = r.u64_or("seed", 0);
    Replication { replicas, seed_base: seed.unwrap_or(file_seed) }
}

fn x0(r: &mut Reader<'_>, dim: usize) -> Vec<i64> {
    let x = r.i64_list_or("x0", &vec![0; dim]);
    if x.len() != dim {
        r.bad("x0", &format!("needs {dim} coordinates"));
    }
    x
}

fn edge_field(r: &mut Reader<'_>, dim: usize) -> StationaryEdgeField {
    if r.has("field") {
        let mut obs = Vec::new();
        for (k, t) in r.tables("field").into_iter().enumerate() {
            let path = format!("{}.field[{k}]", r.path());
            let mut fr = Reader::new(path, Some(t), r.diag());
            obs.push(read_observable(&mut fr));
            fr.finish();
        }
        if obs.len() != dim {
            r.bad("field", &format!("needs one observable per axis ({dim})"));
        }
        StationaryEdgeField::Local(obs)
    } else {
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        let a = r.f64_list_or("a", &e1);
        if a.len() != dim {
            r.bad("a", &format!("needs {dim} components"));
        }
        StationaryEdgeField::Constant(a)
    }
}

fn observable(r: &mut Reader<'_>) -> LocalObservable {
    match r.sub("observable", false) {
        Some(mut o) => {
            let f = read_observable(&mut o);
            o.finish();
            f
        }
        None => LocalObservable::Conductance { axis: 0 },
    }
}

fn sigma_source(r: &mut Reader<'_>) -> SigmaSource {
    match r.choice("sigma", &["dirichlet", "periodic", "exact-1d", "given"]).as_str() {
        "periodic" => SigmaSource::Periodic { r: r.usize("sigma_r"), tol: r.f64_or("sigma_tol", 1e-10) },
        "exact-1d" => SigmaSource::Exact1d { r_norm: r.usize_or("sigma_r_norm", 1_000_000) },
        "given" => SigmaSource::Given { entries: r.f64_list("sigma_entries") },
        _ => SigmaSource::Dirichlet { r: r.usize_or("sigma_r", 16), tol: r.f64_or("sigma_tol", 1e-10) },
    }
}

/// Reads the section of `command`. Problems are recorded in `r`'s diagnostics.
pub fn read_job(command: &str, r: &mut Reader<'_>, dim: usize, seed: Option<u64>) -> Option<Job> {
    let job = match command {
        "env-report" => Job::EnvReport {
            r_max: r.usize_or("r_max", 64),
            p: r.f64_or("p", (dim + 1) as f64),
            q: r.f64_or("q", (dim + 1) as f64),
            eps_grid: r.f64_list_or("eps_grid", &[0.1, 0.5, 0.9]),
            observable: observable(r),
        },
        "sigma" => {
            let boundary = match r.choice("boundary", &["dirichlet", "periodic"]).as_str() {
                "periodic" => Boundary::Periodic,
                _ => Boundary::Dirichlet,
            };
            let exact_r_norm = r.has("exact_r_norm").then(|| r.usize("exact_r_norm"));
            Job::Sigma { r: r.usize("r"), tol: r.f64_or("tol", 1e-10), boundary, exact_r_norm }
        }
        "sigma-scan" => Job::SigmaScan {
            radii: r.usize_list("radii"),
            tol: r.f64_or("tol", 1e-10),
            field: edge_field(r, dim),
            gap_tol: r.f64_or("gap_tol", 0.05),
        },
        "corrector-1d" => Job::Corrector1d {
            n: r.usize("n"),
            r_norm: r.usize("r_norm"),
            defect_tol: r.f64_or("defect_tol", 1e-9),
        },
        "chi" => {
            let tol = r.f64_or("tol", 1e-10);
            Job::Chi {
                r: r.usize("r"),
                epsilon: r.f64("epsilon"),
                tol,
                residual_tol: r.f64_or("residual_tol", tol.max(1e-8)),
                dump: r.bool_or("dump", false),
            }
        }
        "theta" => Job::Theta {
            r: r.usize("r"),
            epsilon: r.f64("epsilon"),
            tol: r.f64_or("tol", 1e-10),
            defect_tol: r.f64_or("defect_tol", 1e-6),
        },
        "dirichlet" => Job::Dirichlet {
            r: r.usize("r"),
            s: r.has("s").then(|| r.usize("s")),
            tol: r.f64_or("tol", 1e-10),
            field: edge_field(r, dim),
            dump: r.bool_or("dump", false),
        },
        "lemma35" => Job::Lemma35 {
            r: r.usize("r"),
            tol: r.f64_or("tol", 1e-10),
            field: edge_field(r, dim),
            gap_tol: r.f64_or("gap_tol", 1e-8),
        },
        "iip" => Job::Iip(IipConfig {
            x0: x0(r, dim),
            n: r.usize("n"),
            replication: replication(r, seed),
            sigma: sigma_source(r),
            z_max: r.f64_or("z_max", 4.0),
            min_replicas: r.usize_or("min_replicas", 30),
        }),
        "ergodic-avg" => {
            let cfg = ErgodicConfig {
                x0: x0(r, dim),
                n: r.usize("n"),
                replication: replication(r, seed),
                r_pred: r.usize_or("r_pred", 1000),
                z_max: r.f64_or("z_max", 3.0),
            };
            Job::Ergodic(cfg, observable(r))
        }
        "conversion" => {
            let cfg = ConversionConfig {
                x0: x0(r, dim),
                n_list: r.usize_list("n_list"),
                replication: replication(r, seed),
                scale: r.f64_or("scale", 1.0),
                ratio_lo: r.f64_or("ratio_lo", 0.5),
                ratio_hi: r.f64_or("ratio_hi", 2.0),
            };
            Job::Conversion(cfg, observable(r))
        }
        "exit-tail" => Job::ExitTail(ExitTailConfig {
            r_list: r.usize_list("r_list"),
            sigma: r.f64_or("sigma", 1.0),
            t_grid: r.f64_list_or("t_grid", &[0.15, 0.2, 0.3, 0.4, 0.6, 0.8, 1.2, 1.6]),
            replication: replication(r, seed),
            alpha_target: r.f64_or("alpha_target", 1.0),
            slope_slack: r.f64_or("slope_slack", 0.3),
            p_max: r.f64_or("p_max", 0.5),
            min_successes: r.usize_or("min_successes", 10),
        }),
        "oscillation" => Job::Oscillation(OscillationConfig {
            x0: x0(r, dim),
            n_list: r.usize_list("n_list"),
            t_end: r.f64_or("t_end", 1.0),
            delta_list: r.f64_list("delta_list"),
            eps: r.f64("eps"),
            replication: replication(r, seed),
        }),
        "lln" => Job::Lln(LlnConfig {
            x0: x0(r, dim),
            n_list: r.usize_list("n_list"),
            delta: r.f64_or("delta", 0.05),
            replication: replication(r, seed),
        }),
        "heat-kernel" => {
            let start = x0(r, dim);
            let mut partner_default = start.clone();
            if let Some(c) = partner_default.first_mut() {
                *c += 1;
            }
            let partner = r.i64_list_or("partner", &partner_default);
            if partner.len() != dim {
                r.bad("partner", &format!("needs {dim} coordinates"));
            }
            Job::HeatKernel(HeatKernelConfig {
                x0: start,
                partner,
                t_list: r.f64_list("t_list"),
                replication: replication(r, seed),
                slope_slack: r.f64_or("slope_slack", 0.3),
                z_max: r.f64_or("z_max", 4.0),
            })
        }
        _ => return None,
    };
    Some(job)
}

/// Rough work estimate: lattice sites touched by solves and walk steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Cost {
    pub sites: u64,
    pub steps: u64,
    pub replicas: u64,
}

fn box_sites(dim: usize, r: usize) -> u64 {
    (2 * r as u64 + 1).saturating_pow(dim as u32)
}

impl Job {
    pub fn cost(&self, dim: usize) -> Cost {
        let m = |rep: &Replication| rep.replicas as u64;
        match self {
            Job::EnvReport { r_max, .. } => Cost { sites: box_sites(dim, *r_max), ..Cost::default() },
            Job::Sigma { r, .. } => Cost { sites: box_sites(dim, *r) * (dim * (dim + 1) / 2) as u64, ..Cost::default() },
            Job::SigmaScan { radii, .. } => Cost { sites: radii.iter().map(|&r| box_sites(dim, r)).sum(), ..Cost::default() },
            Job::Corrector1d { n, .. } => Cost { sites: 2 * *n as u64 + 1, ..Cost::default() },
            Job::Chi { r, epsilon, tol, .. } | Job::Theta { r, epsilon, tol, .. } => {
                let pad = condlab_core::corrector::padding(*epsilon, *tol);
                Cost { sites: box_sites(dim, r + pad) * dim as u64, ..Cost::default() }
            }
            Job::Dirichlet { r, .. } | Job::Lemma35 { r, .. } => Cost { sites: box_sites(dim, *r), ..Cost::default() },
            Job::Iip(c) => Cost { steps: c.n as u64 * m(&c.replication), replicas: m(&c.replication), sites: 0 },
            Job::Ergodic(c, _) => {
                Cost { steps: c.n as u64 * m(&c.replication), replicas: m(&c.replication), sites: box_sites(dim, c.r_pred) }
            }
            Job::Conversion(c, _) => Cost {
                steps: c.n_list.iter().map(|&n| n as u64).sum::<u64>() * m(&c.replication),
                replicas: m(&c.replication),
                sites: c.n_list.iter().map(|&n| box_sites(dim, (c.scale * (n as f64).sqrt()).ceil() as usize)).sum(),
            },
            Job::ExitTail(c) => {
                let tmax = c.t_grid.last().copied().unwrap_or(0.0);
                let per: f64 = c.r_list.iter().map(|&r| tmax * (r * r) as f64).sum();
                Cost { steps: (per * 9.0) as u64 * m(&c.replication), replicas: 9 * m(&c.replication), sites: 0 }
            }
            Job::Oscillation(c) => Cost {
                steps: c.n_list.iter().map(|&n| (c.t_end * n as f64).ceil() as u64).sum::<u64>() * m(&c.replication),
                replicas: m(&c.replication),
                sites: 0,
            },
            Job::Lln(c) => Cost {
                steps: c.n_list.iter().copied().max().unwrap_or(0) as u64 * m(&c.replication),
                replicas: m(&c.replication),
                sites: 0,
            },
            Job::HeatKernel(c) => Cost {
                steps: (2.0 * c.t_list.iter().sum::<f64>()) as u64 * m(&c.replication),
                replicas: 2 * m(&c.replication),
                sites: 0,
            },
        }
    }
}

fn experiment<R: Serialize>(out: Outcome<R>) -> Result<RunOutput> {
    let summary = serde_json::to_value(&out.report)?;
    let pass = summary.get("pass").and_then(Value::as_bool);
    let warnings = summary
        .get("warnings")
        .and_then(Value::as_array)
        .map(|w| w.iter().filter_map(|s| s.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    Ok(RunOutput { summary, table: out.table, extra: Vec::new(), pass, warnings })
}

fn output(summary: Value, table: Table, pass: Option<bool>) -> RunOutput {
    RunOutput { summary, table, extra: Vec::new(), pass, warnings: Vec::new() }
}

fn solve_json(rep: &condlab_core::solver::SolveReport) -> Value {
    json!({ "iterations": rep.iterations, "residual": rep.residual, "converged": rep.converged, "tolerance": rep.tolerance })
}

/// Runs a parsed job.
pub fn execute(env: &Environment, job: &Job, pool: &Pool) -> Result<RunOutput> {
    let d = env.dim();
    match job {
        Job::EnvReport { r_max, p, q, eps_grid, observable } => {
            let radii = dyadic_radii(*r_max);
            let avg = averaging_diagnostic(env, observable, &radii)?;
            let mom = moment_report(env, *p, *q, *r_max)?;
            let temp = temperedness_diagnostic(env, eps_grid, *r_max)?;
            let mut table = Table::new(&["radius", "block_average", "increment", "p_block_sum", "q_block_sum"]);
            for (k, row) in avg.rows.iter().enumerate() {
                table.push(vec![
                    Cell::from(row.radius),
                    row.average.into(),
                    row.increment.into(),
                    mom.p_block_sums[k].into(),
                    mom.q_block_sums[k].into(),
                ]);
            }
            let summary = json!({
                "environment": env.describe(),
                "dim": d,
                "periods": env.periods(),
                "averaging": {
                    "radii": radii,
                    "averages": avg.rows.iter().map(|r| r.average).collect::<Vec<_>>(),
                    "gaps_to_final": avg.rows.iter().map(|r| r.gap_to_final).collect::<Vec<_>>(),
                    "shrink_factor": avg.shrink_factor,
                    "non_averaging_suspected": avg.non_averaging_suspected,
                },
                "moments": {
                    "p": mom.p, "q": mom.q,
                    "p_sup": mom.p_sup, "q_sup": mom.q_sup,
                    "bounded": mom.bounded,
                    "exponents_admissible": mom.exponents_admissible,
                    "admissible": mom.admissible,
                },
                "temperedness": {
                    "radii": temp.radii,
                    "rows": temp.rows.iter().map(|r| json!({
                        "epsilon": r.epsilon, "fractions": r.fractions, "densities": r.densities, "limsup_proxy": r.limsup_proxy,
                    })).collect::<Vec<_>>(),
                    "non_tempered_suspected": temp.non_tempered_suspected,
                },
            });
            Ok(output(summary, table, None))
        }
        Job::Sigma { r, tol, boundary, exact_r_norm } => {
            let s = effective_sigma(env, *r, *tol, *boundary)?;
            let mut table = Table::new(&["i", "j", "sigma"]);
            for i in 0..d {
                for j in 0..d {
                    table.push(vec![Cell::from(i + 1), Cell::from(j + 1), s.get(i, j).into()]);
                }
            }
            let exact = match exact_r_norm {
                Some(rn) if d == 1 => Some(sigma_1d_exact(env, *rn)?),
                _ => None,
            };
            let psd = s.is_psd();
            let summary = json!({
                "sigma": s.rows(),
                "eigenvalues": s.eigenvalues,
                "psd": psd,
                "r": s.r,
                "boundary": format!("{:?}", s.boundary).to_lowercase(),
                "tol": s.tol,
                "sigma_1d_exact": exact,
            });
            Ok(output(summary, table, Some(psd)))
        }
        Job::SigmaScan { radii, tol, field, gap_tol } => {
            let rows = energy_scan(env, radii, field, *tol)?;
            let reference = match env.periods() {
                Some(_) => Some(periodic_cell_energy(env, field, *tol)?.per_site),
                None => None,
            };
            let rel = |v: f64| reference.map(|e| if e != 0.0 { (v - e).abs() / e.abs() } else { (v - e).abs() });
            let mut table = Table::new(&["radius", "per_site", "gap_to_previous", "relative_gap_to_cell", "iterations", "residual"]);
            for row in &rows {
                table.push(vec![
                    Cell::from(row.radius),
                    row.per_site.into(),
                    row.gap_to_previous.into(),
                    rel(row.per_site).map_or(Cell::Text(String::new()), Cell::Float),
                    Cell::from(row.report.iterations),
                    row.report.residual.into(),
                ]);
            }
            let gaps: Vec<f64> = rows.iter().filter_map(|r| rel(r.per_site)).collect();
            let pass = reference.map(|_| {
                gaps.windows(2).all(|w| w[1] <= w[0]) && gaps.last().is_some_and(|&g| g <= *gap_tol)
            });
            let summary = json!({
                "radii": radii,
                "per_site": rows.iter().map(|r| r.per_site).collect::<Vec<_>>(),
                "cell_per_site": reference,
                "relative_gaps": gaps,
                "gap_tol": gap_tol,
                "pass": pass,
            });
            Ok(output(summary, table, pass))
        }
        Job::Corrector1d { n, r_norm, defect_tol } => {
            let c = corrector_1d(env, *n, *r_norm)?;
            let mut table = Table::new(&["x", "psi", "psi_minus_x"]);
            let ni = *n as i64;
            for x in -ni..=ni {
                let p = c.psi(x).unwrap_or(f64::NAN);
                table.push(vec![Cell::Int(x), p.into(), (p - x as f64).into()]);
            }
            let defect = c.harmonic_defect(env);
            let pass = defect <= *defect_tol;
            let summary = json!({
                "a": c.a,
                "n": c.n,
                "r_norm": r_norm,
                "sublinearity": c.profile.iter().map(|(m, s)| json!({"m": m, "value": s})).collect::<Vec<_>>(),
                "harmonic_defect": defect,
                "defect_tol": defect_tol,
                "pass": pass,
            });
            Ok(output(summary, table, Some(pass)))
        }
        Job::Chi { r, epsilon, tol, residual_tol, dump } => {
            let chi = chi_eps(env, *r, *epsilon, *tol)?;
            let pass = chi.residual <= *residual_tol;
            let summary = json!({
                "r": chi.r,
                "epsilon": chi.epsilon,
                "pad": chi.pad,
                "residual": chi.residual,
                "residual_tol": residual_tol,
                "eps_norm": chi.eps_norm(env),
                "solve": solve_json(&chi.report),
                "pass": pass,
            });
            let mut out = output(summary, field_table(&chi.field), Some(pass));
            if *dump {
                out.extra.push(("chi.bin".into(), field_binary(&chi.field, Some(*epsilon), chi.pad)));
            }
            Ok(out)
        }
        Job::Theta { r, epsilon, tol, defect_tol } => {
            let chi = chi_eps(env, *r, *epsilon, *tol)?;
            let th = theta(env, *r, *epsilon, &chi, *tol)?;
            let defect = harmonic_defect(env, &chi, &th);
            let pass = defect <= *defect_tol;
            let summary = json!({
                "r": r,
                "epsilon": epsilon,
                "chi_residual": chi.residual,
                "harmonic_defect": defect,
                "defect_tol": defect_tol,
                "solve": solve_json(&th.report),
                "pass": pass,
            });
            Ok(output(summary, field_table(&th.field), Some(pass)))
        }
        Job::Dirichlet { r, s, tol, field, dump } => {
            let e = match s {
                Some(s) => dirichlet_energy_restricted(env, *r, *s, field, *tol)?,
                None => dirichlet_energy(env, *r, field, *tol)?,
            };
            let summary = json!({
                "r": r,
                "support_radius": s,
                "energy": e.value,
                "per_site": e.per_site,
                "per_pi": e.per_pi,
                "unminimized": e.unminimized,
                "solve": solve_json(&e.report),
            });
            let mut out = output(summary, field_table(&e.minimizer), None);
            if *dump {
                out.extra.push(("minimizer.bin".into(), field_binary(&e.minimizer, None, 0)));
            }
            Ok(out)
        }
        Job::Lemma35 { r, tol, field, gap_tol } => {
            let l = lemma35_check(env, *r, field, *tol)?;
            let pass = l.gap <= *gap_tol;
            let mut table = Table::new(&["r", "lhs", "rhs", "gap"]);
            table.push(vec![Cell::from(*r), l.lhs.into(), l.rhs.into(), l.gap.into()]);
            let summary = json!({ "r": r, "lhs": l.lhs, "rhs": l.rhs, "gap": l.gap, "gap_tol": gap_tol, "pass": pass });
            Ok(output(summary, table, Some(pass)))
        }
        Job::Iip(c) => experiment(iip::run(env, c, pool)?),
        Job::Ergodic(c, f) => experiment(ergodic::run(env, f, c, pool)?),
        Job::Conversion(c, f) => experiment(conversion::run(env, f, c, pool)?),
        Job::ExitTail(c) => experiment(exit_tail::run(env, c, pool)?),
        Job::Oscillation(c) => experiment(oscillation::run(env, c, pool)?),
        Job::Lln(c) => experiment(lln::run(env, c, pool)?),
        Job::HeatKernel(c) => experiment(heat_kernel::run(env, c, pool)?),
    }
}

/// Config after overrides, with the environment and job parsed.
pub struct Prepared {
    pub config: Config,
    pub env: Environment,
    pub job: Option<Job>,
}

fn check_sections(config: &Config) -> Result<()> {
    let unknown = config.unknown_sections(COMMANDS);
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { unknown, ..Default::default() }.into())
    }
}

fn read_env_section(config: &Config, diag: &mut ConfigError) -> Option<Environment> {
    let mut r = Reader::new("env", config.section("env"), diag);
    if config.section("env").is_none() {
        r.diag().missing.push("env".into());
        return None;
    }
    let env = read_env(&mut r);
    r.finish();
    env
}

/// Loads the config, applies overrides and parses `[env]` and the command's section.
pub fn prepare(command: &str, common: &Common) -> Result<Prepared> {
    let mut config = Config::load(&common.config)?;
    for s in &common.set {
        config.apply_override(command, s, COMMANDS)?;
    }
    if let Some(seed) = common.seed {
        if config.section(command).is_some_and(|t| t.contains_key("replicas")) {
            config.apply_override(command, &format!("seed={seed}"), COMMANDS)?;
        }
    }
    check_sections(&config)?;
    let mut diag = ConfigError::default();
    let env = read_env_section(&config, &mut diag);
    let mut job = None;
    if command != "validate" {
        if config.section(command).is_none() {
            diag.missing.push(command.to_string());
        } else {
            let dim = env.as_ref().map_or(1, Environment::dim);
            let mut r = Reader::new(command, config.section(command), &mut diag);
            job = read_job(command, &mut r, dim, common.seed);
            r.finish();
        }
    }
    match env {
        Some(env) if diag.is_empty() => Ok(Prepared { config, env, job }),
        _ => Err(diag.into()),
    }
}

fn out_root(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Schema check of every present section, moment preview and cost table.
fn validate(p: &Prepared, common: &Common, out: &mut dyn Write) -> Result<RunOutput> {
    let d = p.env.dim();
    let mut diag = ConfigError::default();
    let mut costs = Vec::new();
    for &cmd in COMMANDS.iter().filter(|c| **c != "validate") {
        if let Some(t) = p.config.section(cmd) {
            let mut r = Reader::new(cmd, Some(t), &mut diag);
            let job = read_job(cmd, &mut r, d, common.seed);
            r.finish();
            if let Some(job) = job {
                costs.push((cmd, job.cost(d)));
            }
        }
    }
    let mut vr = Reader::new("validate", p.config.section("validate"), &mut diag);
    // p = q = d + 1 satisfies 1/p + 1/q < 2/d in every dimension
    let pq = (vr.f64_or("p", (d + 1) as f64), vr.f64_or("q", (d + 1) as f64));
    let r_max = vr.usize_or("r_max", 16);
    vr.finish();
    if !diag.is_empty() {
        return Err(diag.into());
    }
    let (pp, qq) = pq;
    let mom = moment_report(&p.env, pp, qq, r_max)?;
    let mut warnings = Vec::new();
    if !exponents_admissible(pp, qq, d) {
        warnings.push(format!(
            "moment exponents p = {pp}, q = {qq} are not admissible in d = {d}: need p, q > 1 and 1/p + 1/q < 2/d"
        ));
    }
    if !mom.bounded {
        warnings.push(format!("moment block sums grow up to r = {r_max}"));
    }
    let mut table = Table::new(&["command", "sites", "steps", "replicas"]);
    for (cmd, c) in &costs {
        table.push(vec![Cell::from(*cmd), Cell::from(c.sites), Cell::from(c.steps), Cell::from(c.replicas)]);
    }
    let _ = writeln!(out, "ok: {} ({}), {} command section(s)", p.config.source, p.env.describe(), costs.len());
    let _ = writeln!(out, "{:<14} {:>14} {:>16} {:>10}", "command", "sites", "steps", "replicas");
    for (cmd, c) in &costs {
        let _ = writeln!(out, "{:<14} {:>14} {:>16} {:>10}", cmd, c.sites, c.steps, c.replicas);
    }
    let summary = json!({
        "ok": true,
        "environment": p.env.describe(),
        "dim": d,
        "sections": costs.iter().map(|(c, _)| *c).collect::<Vec<_>>(),
        "cost": costs.iter().map(|(c, k)| (c.to_string(), serde_json::to_value(k).unwrap_or(Value::Null))).collect::<serde_json::Map<_, _>>(),
        "moments": {
            "p": pp, "q": qq, "r_max": r_max,
            "p_sup": mom.p_sup, "q_sup": mom.q_sup,
            "bounded": mom.bounded,
            "exponents_admissible": mom.exponents_admissible,
            "admissible": mom.admissible,
        },
        "warnings": warnings,
    });
    Ok(RunOutput { summary, table, extra: Vec::new(), pass: None, warnings })
}

fn run_command(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let name = cmd.name();
    let common = cmd.common();
    let prepared = prepare(name, common)?;
    let dir = out_root(common).join(name);
    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let pool = Pool::new(common.workers)?;
    let manifest = Manifest::begin(
        &dir,
        json!({
            "command": name,
            "config_source": prepared.config.source,
            "config": prepared.config.to_json(),
            "config_hash": prepared.config.hash(),
            "seed_override": common.seed,
            "overrides": common.set,
            "output_dir": dir.display().to_string(),
            "workers": pool.workers(),
        }),
    )?;
    let result = match &prepared.job {
        Some(job) => execute(&prepared.env, job, &pool),
        None => validate(&prepared, common, out),
    };
    let run = match result {
        Ok(run) => run,
        Err(e) => {
            manifest.finish("error", 1, &[])?;
            return Err(e);
        }
    };
    let mut summary = json!({
        "command": name,
        "config_hash": prepared.config.hash(),
        "environment": prepared.env.describe(),
        "pass": run.pass,
        "warnings": run.warnings,
        "result": run.summary,
    });
    if let Some(rep) = prepared.config.section(name).and_then(|t| t.get("seed")) {
        summary["seed"] = serde_json::to_value(rep)?;
    }
    let mut files = vec!["data.csv".to_string(), "summary.json".to_string()];
    run.table.write(&dir.join("data.csv"))?;
    write_json(&dir.join("summary.json"), &summary)?;
    for (file, bytes) in &run.extra {
        write_bytes(&dir.join(file), bytes)?;
        files.push(file.clone());
    }
    for w in &run.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let (status, code) = match run.pass {
        Some(false) => ("fail", 2),
        Some(true) => ("pass", 0),
        None => ("done", 0),
    };
    let _ = writeln!(out, "{name}: {status} -> {}", dir.display());
    manifest.finish(status, code, &files)?;
    Ok(code)
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match run_command(&cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
