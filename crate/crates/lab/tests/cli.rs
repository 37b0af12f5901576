use std::path::Path;
use std::process::{Command, Output};

fn condlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condlab")).args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn bundled_sigma_is_half_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = condlab(&["sigma", "-c", "constant-d2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = json(&dir.path().join("sigma/summary.json"));
    assert_eq!(summary["result"]["sigma"], serde_json::json!([[0.5, 0.0], [0.0, 0.5]]));
    assert_eq!(summary["pass"], true);
    let manifest = json(&dir.path().join("sigma/manifest.json"));
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["exit_code"], 0);
}

#[test]
fn energy_identity_passes_on_iid_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = condlab(&["lemma35", "-c", "iid-d2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn single_replica_is_not_judged() {
    let dir = tempfile::tempdir().unwrap();
    let o = condlab(&["iip", "-c", "periodic-d1", "--set", "replicas=1", "--set", "n=100"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    assert_eq!(json(&dir.path().join("iip/summary.json"))["pass"], serde_json::Value::Null);
}

#[test]
fn wrong_covariance_fails_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("given.toml");
    let body = "[env]\nkind = \"constant\"\ndim = 1\nvalue = 1.0\n\n[iip]\nn = 1000\nreplicas = 400\nsigma = \"given\"\nsigma_entries = [5.0]\n";
    std::fs::write(&cfg, body).unwrap();
    let o = condlab(&["iip", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("iip/manifest.json"))["status"], "fail");
    // a bare key overrides the command's own section even when it names another command
    let o = condlab(&["iip", "-c", cfg.to_str().unwrap(), "--set", "sigma_entries=[1.0]", "--set", "sigma=\"given\""], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn unknown_and_missing_keys_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[env]\nkind = \"constant\"\ndim = 2\nvalue = 1.0\nbogus = 3\n\n[sigma]\ntol = 1e-10\n").unwrap();
    let o = condlab(&["sigma", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("env.bogus") && e.contains("sigma.r"), "{e}");
}

#[test]
fn negative_conductance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.toml");
    std::fs::write(&cfg, "[env]\nkind = \"periodic\"\nperiods = [2]\nvalues = [1.0, -2.0]\n").unwrap();
    let o = condlab(&["validate", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not positive"));
}

#[test]
fn inadmissible_moments_warn_but_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d3.toml");
    std::fs::write(&cfg, "[env]\nkind = \"constant\"\ndim = 3\nvalue = 1.0\n[validate]\np = 1.0\nq = 1.0\n").unwrap();
    let o = condlab(&["validate", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("not admissible"));
}

#[test]
fn every_bundled_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["constant-d1", "constant-d2", "iid-d2", "periodic-d1", "periodic-d2", "golden-d1"] {
        let o = condlab(&["validate", "-c", name], dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}

#[test]
fn output_root_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_condlab"))
        .args(["sigma", "-c", "constant-d1"])
        .env("CONDLAB_OUT", dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("sigma/data.csv").is_file());
}

#[test]
fn help_and_bad_subcommand() {
    let bin = env!("CARGO_BIN_EXE_condlab");
    assert_eq!(Command::new(bin).arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(Command::new(bin).arg("frobnicate").output().unwrap().status.code(), Some(1));
}

#[test]
fn zero_workers_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = condlab(&["lln", "-c", "constant-d2", "--workers", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
