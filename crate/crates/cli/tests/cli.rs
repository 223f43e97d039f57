use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_euclid-qft"));
    c.env_remove("EUCLID_QFT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

#[test]
fn free_partition_function_is_one() {
    let out = run(&["partition"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["results"]["Z"], 1.0);
    assert_eq!(v["results"]["jensen_ok"], true);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn quadrature_partition_on_six_sites() {
    let out = run(&["partition", "--method", "quadrature", "--extents", "2,3", "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let z = json(&out)["results"]["Z"].as_f64().unwrap();
    assert!(z >= 1.0);
    // seven sites is over the quadrature budget: a usage error
    let out = run(&["partition", "--method", "quadrature", "--extents", "7", "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nelson_rectangle() {
    let out = run(&["nelson", "--l", "2", "--t", "3", "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["results"]["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["pass"], true);
    let out = run(&["nelson", "--l", "2", "--t", "3", "--spacing-time", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transfer_reports_ground_state() {
    let out = run(&["transfer", "--n-s", "2", "--lambda", "0.1", "--fkn-steps", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["results"];
    assert!(r["energy_physical_units"].as_f64().unwrap() < 0.0);
    assert!(r["fkn"]["residual"].as_f64().unwrap() <= 1e-8);
    assert!(r["gap_physical_units"].as_f64().unwrap() > 0.0);
}

#[test]
fn energy_density_is_csv() {
    let out = run(&["energy-density", "--ells", "1,2", "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# schema_version=1 command=energy-density"));
    assert_eq!(lines[1], "ell,energy_physical_units,alpha_physical_units");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("1,-"));
}

#[test]
fn scalar_report_refuses_csv() {
    let out = run(&["partition", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--format json"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["partition", "--extents", "1,4"]).status.code(), Some(2));
    assert_eq!(run(&["partition", "--poly", "0,0,0,-1"]).status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[budget]\nsamples = 10\nchians = 2\n").unwrap();
    let out = run(&["partition", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("chians"), "{err}");
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let report = dir.path().join("report.json");
    std::fs::write(
        &cfg,
        format!(
            "seed = 11\noutput = {:?}\n[geometry]\ndim = 1\nextents = [5]\nboundary = \"dirichlet\"\n[model]\npolynomial = [0, 0, 0, 0, 0.2]\n[budget]\nsamples = 2000\n",
            report.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(&["schwinger", "--points", "1,2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["results"]["samples"], 2000);
    assert_eq!(v["config"]["geometry"]["extents"], serde_json::json!([5]));
}

#[test]
fn same_seed_same_report() {
    let args = ["schwinger", "--points", "0,5", "--lambda", "0.1", "--samples", "5000", "--seed", "4"];
    let a = without_timing(json(&run(&args)));
    let b = without_timing(json(&run(&args)));
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    let single = without_timing(json(&run(&[&args[..], &["--threads", "1"]].concat())));
    assert_eq!(a["results"], single["results"]);
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["schwinger", "--points", "0,1", "--lambda", "0.1", "--samples", "2000"];
    let env = bin().args(args).env("EUCLID_QFT_SEED", "9").output().unwrap();
    let flag = run(&[&args[..], &["--seed", "9"]].concat());
    let none = run(&args);
    assert_eq!(json(&env)["seed"], 9);
    assert_eq!(json(&env)["results"]["value"], json(&flag)["results"]["value"]);
    assert_eq!(json(&none)["seed"], 0);
    let bad = bin().args(args).env("EUCLID_QFT_SEED", "nine").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn degenerate_weights_fail_the_run() {
    let out = run(&["schwinger", "--points", "0,1", "--lambda", "50", "--extents", "8,8", "--samples", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mcmc"));
}

#[test]
fn mcmc_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("mc.json");
    let out = run(&[
        "schwinger", "--points", "0,1", "--lambda", "0.1", "--method", "mcmc", "--sweeps", "600", "--chains", "2",
        "--checkpoint-every", "100", "--out", report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let chk = Path::new(&format!("{}.checkpoints", report.display())).to_path_buf();
    assert!(chk.join("chain-0.chk").exists() && chk.join("chain-1.chk").exists());
}

#[test]
fn markov_and_semigroup_checks() {
    let out = run(&["markov-check", "--extents", "6,6", "--boundary", "dirichlet"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdicts"].as_array().unwrap().len(), 16);
    let out = run(&["semigroup-check", "--extents", "8,64"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["hafnian", "--sites", "0,1,2,3"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["hyper-check", "--norm", "0.57", "--p", "2", "--q", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["propagator", "--extents", "8", "--refine-at", "2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_all_quick() {
    let out = run(&["verify-all", "--quick"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("[PASS]")).count(), 14);
    assert_eq!(run(&["verify-all", "--only", "15"]).status.code(), Some(2));
}
