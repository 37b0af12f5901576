//! Acceptance suite: ten end-to-end checks at their stated tolerances and
//! runtime budgets. Prints one PASS/FAIL line per check; exits nonzero if any
//! check fails.

use std::error::Error;
use std::ffi::OsString;
use std::path::Path;
use std::time::{Duration, Instant};

use condlab::experiments::exit_tail::{self, ExitTailConfig};
use condlab::experiments::iip::{self, IipConfig, SigmaSource};
use condlab::experiments::{ergodic, Replication};
use condlab::pool::Pool;
use condlab_core::averaging::block_average;
use condlab_core::corrector::{chi_eps, corrector_1d, eps_chi_norm, harmonic_defect, theta};
use condlab_core::homogenize::{
    effective_sigma, energy_scan, lemma35_check, periodic_cell_energy, sigma_1d_exact, StationaryEdgeField,
};
use condlab_core::rng::{mix64, unit_f64};
use condlab_core::solver::{
    apply_generator, neumann_series_massive, solve_dirichlet, solve_massive, Boundary, LatticeField,
    LatticeOperator, Window,
};
use condlab_core::{Distribution, Edge, Environment, LocalObservable, PeriodicCell};
use nalgebra::{DMatrix, DVector};

type Check = Result<(bool, String), Box<dyn Error>>;

fn period2() -> Environment {
    Environment::periodic(PeriodicCell::line(&[1.0, 2.0]).unwrap()).unwrap()
}

fn iid(seed: u64) -> Environment {
    Environment::hashed_iid(2, Distribution::Uniform { lo: 0.5, hi: 2.0 }, seed).unwrap()
}

/// Deterministic values in [-1, 1].
fn values(n: usize, salt: u64) -> Vec<f64> {
    (0..n).map(|i| 2.0 * unit_f64(mix64(salt.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64))) - 1.0).collect()
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" > ")
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn exact_1d_diffusivity() -> Check {
    let env = period2();
    let exact = sigma_1d_exact(&env, 1000)?;
    let periodic = effective_sigma(&env, 2, 1e-12, Boundary::Periodic)?.entries[0];
    let cfg = IipConfig {
        x0: vec![0],
        n: 100_000,
        replication: Replication { replicas: 10_000, seed_base: 1 },
        sigma: SigmaSource::Exact1d { r_norm: 1000 },
        z_max: 4.0,
        min_replicas: 30,
    };
    let mc = iip::run(&env, &cfg, &Pool::new(None)?)?.report.empirical[0];
    let target = 8.0 / 9.0;
    let ok = (exact - target).abs() <= 1e-12 && (periodic - target).abs() <= 1e-10 && (mc - target).abs() <= 0.03;
    Ok((ok, format!("closed form {exact:.15}, periodic cell {periodic:.15}, Var(X_n)/n {mc:.4} (target 8/9)")))
}

fn simple_walk_covariance() -> Check {
    let env = Environment::constant(2, 1.0)?;
    let sigma = effective_sigma(&env, 8, 1e-12, Boundary::Dirichlet)?;
    let exact = max_gap(&sigma.entries, &[0.5, 0.0, 0.0, 0.5]);
    let cfg = IipConfig {
        x0: vec![0, 0],
        n: 10_000,
        replication: Replication { replicas: 10_000, seed_base: 1 },
        sigma: SigmaSource::Dirichlet { r: 8, tol: 1e-12 },
        z_max: 4.0,
        min_replicas: 30,
    };
    let rep = iip::run(&env, &cfg, &Pool::new(None)?)?.report;
    let ok = exact <= 1e-12 && rep.pass == Some(true);
    Ok((ok, format!("|sigma - I/2| = {exact:.1e}, empirical {:?}, max |z| {:.2}", rep.empirical, rep.max_abs_z)))
}

fn energy_identity() -> Check {
    let v = StationaryEdgeField::unit(2, 0);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let env = iid(seed);
        for r in [8, 16] {
            worst = worst.max(lemma35_check(&env, r, &v, 1e-10)?.gap);
        }
    }
    Ok((worst <= 1e-8, format!("largest gap between the two sides {worst:.2e} over 10 environments x 2 radii")))
}

fn periodic_energy_convergence() -> Check {
    let env = Environment::periodic(PeriodicCell::new(vec![2, 2], vec![1.0, 2.0, 3.0, 1.0, 2.0, 1.0, 1.0, 4.0])?)?;
    let v = StationaryEdgeField::unit(2, 0);
    let cell = periodic_cell_energy(&env, &v, 1e-12)?.per_site;
    let scan = energy_scan(&env, &[16, 32, 64], &v, 1e-10)?;
    let gaps: Vec<f64> = scan.iter().map(|row| (row.per_site - cell).abs() / cell).collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let last = *gaps.last().unwrap();
    Ok((monotone && last <= 0.05, format!("cell infimum {cell:.6}, relative gaps {gaps:.4?}")))
}

fn corrector_shrinkage() -> Check {
    let env = period2();
    let norms = [0.1, 0.01, 0.001].iter().map(|&e| eps_chi_norm(&env, 512, e, 1e-10)).collect::<Result<Vec<_>, _>>()?;
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    let mut residual = 0.0f64;
    let mut defect = 0.0f64;
    for eps in [0.1, 0.01, 0.001] {
        let chi = chi_eps(&env, 512, eps, 1e-10)?;
        residual = residual.max(chi.residual);
        let th = theta(&env, 512, eps, &chi, 1e-10)?;
        defect = defect.max(harmonic_defect(&env, &chi, &th));
    }
    let ok = decreasing && residual <= 1e-8 && defect <= 1e-6;
    Ok((ok, format!("eps |chi| {}, residual {residual:.1e}, harmonic defect {defect:.1e}", sci(&norms))))
}

fn quasiperiodic_averaging() -> Check {
    let env = Environment::golden(1)?;
    let f = LocalObservable::Conductance { axis: 0 };
    let cfg = ergodic::ErgodicConfig {
        x0: vec![0],
        n: 1_000_000,
        replication: Replication { replicas: 100, seed_base: 1 },
        r_pred: 1_000_000,
        z_max: 3.0,
    };
    let rep = ergodic::run(&env, &f, &cfg, &Pool::new(None)?)?.report;
    let within = rep.gap <= 3.0 * rep.time_average_std_error;
    let block = block_average(&env, &f, 1_000_000)?;
    let ok = within && (block - 1.5).abs() <= 1e-3;
    Ok((
        ok,
        format!(
            "time average {:.5} +- {:.5}, pi-weighted prediction {:.5} ({:.2} SE), block average {block:.6}",
            rep.time_average_mean, rep.time_average_std_error, rep.prediction, rep.gap / rep.time_average_std_error
        ),
    ))
}

fn corrector_sublinearity() -> Check {
    let golden = corrector_1d(&Environment::golden(1)?, 1 << 14, 1_000_000)?;
    let ratios: Vec<f64> = [1usize << 8, 1 << 10, 1 << 12, 1 << 14].iter().map(|&m| golden.sublinearity(m)).collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let p2 = corrector_1d(&period2(), 1024, 1024)?;
    let exact = (-512i64..=512).all(|k| p2.psi(2 * k) == Some((2 * k) as f64));
    Ok((decreasing && exact, format!("max|psi(x)-x|/m {}, period-2 psi(2k) = 2k: {exact}", sci(&ratios))))
}

fn exit_time_tail() -> Check {
    let env = Environment::constant(2, 1.0)?;
    let cfg = ExitTailConfig {
        r_list: vec![16, 32],
        sigma: 1.0,
        t_grid: vec![0.15, 0.2, 0.3, 0.4, 0.6, 0.8, 1.2, 1.6],
        replication: Replication { replicas: 5000, seed_base: 1 },
        alpha_target: 1.0,
        slope_slack: 0.3,
        p_max: 0.5,
        min_successes: 10,
    };
    let rep = exit_tail::run(&env, &cfg, &Pool::new(None)?)?.report;
    let slope = rep.slope.unwrap_or(f64::NAN);
    Ok((slope >= 0.7, format!("log-log slope {slope:.3} over {} points", rep.fit_points)))
}

/// Dense `pi (eps - L)` with the exterior dropped, built edge by edge.
fn dense(env: &Environment, w: &Window, eps: f64) -> Result<DMatrix<f64>, Box<dyn Error>> {
    let n = w.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = w.site(i);
        for axis in 0..env.dim() {
            for step in [1i64, -1] {
                let y = x.offset(axis, step);
                let c = env.conductance(&Edge::between(x, y).ok_or("sites are not neighbors")?)?;
                a[(i, i)] += c * (1.0 + eps);
                if let Some(j) = w.index(&y) {
                    a[(i, j)] -= c;
                }
            }
        }
    }
    Ok(a)
}

fn solver_correctness() -> Check {
    let env = iid(3);
    let w = Window::centered(2, 8)?;
    let n = w.len();
    let h0 = LatticeField::scalar(w.clone(), values(n, 1))?;
    let rhs = apply_generator(&env, &h0)?.scaled(-1.0);
    let (h, _) = solve_dirichlet(&env, &w, &rhs, 1e-10)?;
    let round_trip = max_gap(h.values(), h0.values());

    let op = LatticeOperator::new(&env, &w)?;
    let (g, k) = (values(n, 2), values(n, 3));
    let (mut lg, mut lk) = (vec![0.0; n], vec![0.0; n]);
    op.generator(&g, &mut lg);
    op.generator(&k, &mut lk);
    let (a, b) = (op.pi_inner(&g, &lk), op.pi_inner(&lg, &k));
    let adjoint = (a - b).abs() / a.abs().max(1.0);

    let eps = 0.5;
    let f = LatticeField::scalar(w.clone(), values(n, 4))?;
    let (direct, _) = solve_massive(&env, &w, &f, eps, 1e-13)?;
    let mut terms = 1;
    let series = loop {
        let s = neumann_series_massive(&env, &w, &f, eps, terms)?;
        if s.tail_bound <= 1e-9 {
            break s;
        }
        terms += 1;
    };
    let neumann = max_gap(series.field.values(), direct.values());

    let pi = DVector::from_iterator(n, w.sites().map(|x| env.pi(x)));
    let exact = dense(&env, &w, 0.0)?
        .lu()
        .solve(&pi.component_mul(&DVector::from_vec(f.values().to_vec())))
        .ok_or("singular dense system")?;
    let (iter, _) = solve_dirichlet(&env, &w, &f, 1e-12)?;
    let dense_gap = max_gap(iter.values(), exact.as_slice());

    let ok = n <= 300 && round_trip <= 1e-8 && adjoint <= 1e-12 && neumann <= 1e-8 && dense_gap <= 1e-8;
    Ok((
        ok,
        format!(
            "{n} sites: round trip {round_trip:.1e}, adjointness {adjoint:.1e}, series ({terms} terms) {neumann:.1e}, dense {dense_gap:.1e}"
        ),
    ))
}

fn run_cli(args: &[&str]) -> Result<i32, Box<dyn Error>> {
    let argv: Vec<OsString> = std::iter::once("condlab").chain(args.iter().copied()).map(OsString::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = condlab::cli::run(argv, &mut out, &mut err);
    if code == 1 {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(code)
}

fn reproducibility() -> Check {
    let runs: &[(&str, &str, &[&str])] = &[
        ("iip", "periodic-d1", &["n=2000", "replicas=200"]),
        ("iip", "constant-d2", &["n=500", "replicas=200"]),
        ("ergodic-avg", "golden-d1", &["n=5000", "replicas=20"]),
        ("conversion", "periodic-d1", &["n_list=[1000, 4000]", "replicas=10"]),
        ("exit-tail", "constant-d2", &["r_list=[8]", "replicas=200"]),
        ("oscillation", "constant-d2", &["n_list=[400]", "replicas=100"]),
        ("lln", "iid-d2", &["n_list=[10, 100, 1000]", "replicas=100"]),
        ("heat-kernel", "constant-d2", &["t_list=[4.0, 16.0]", "replicas=500"]),
        ("sigma-scan", "periodic-d2", &["radii=[4, 8]"]),
    ];
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let mut compared = 0;
    for (command, config, sets) in runs {
        for (dir, workers) in dirs.iter().zip(["1", "4"]) {
            let out = dir.path().join(config);
            let mut args = vec![*command, "-c", config, "--seed", "11", "--workers", workers, "--out", out.to_str().unwrap()];
            for s in *sets {
                args.extend(["--set", s]);
            }
            run_cli(&args)?;
        }
        let read = |root: &Path| std::fs::read(root.join(config).join(command).join("data.csv"));
        let (a, b) = (read(dirs[0].path())?, read(dirs[1].path())?);
        if a.is_empty() || a != b {
            return Ok((false, format!("{command} on {config}: data.csv differs between 1 and 4 workers")));
        }
        compared += 1;
    }
    Ok((true, format!("{compared} command runs byte-identical under 1 and 4 workers")))
}

fn main() {
    let checks: [(&str, u64, fn() -> Check); 10] = [
        ("exact one-dimensional diffusivity", 120, exact_1d_diffusivity),
        ("simple-walk covariance", 300, simple_walk_covariance),
        ("finite-volume energy identity", 60, energy_identity),
        ("periodic energy convergence", 300, periodic_energy_convergence),
        ("massive corrector shrinkage", 180, corrector_shrinkage),
        ("quasiperiodic time averages", 180, quasiperiodic_averaging),
        ("corrector sublinearity", 30, corrector_sublinearity),
        ("exit-time tail", 300, exit_time_tail),
        ("solver correctness", 60, solver_correctness),
        ("reproducibility across worker counts", 300, reproducibility),
    ];
    let only: Option<usize> = std::env::var("CONDLAB_ACCEPT_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|k| k != id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {detail} [{:.1}s / {budget}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
