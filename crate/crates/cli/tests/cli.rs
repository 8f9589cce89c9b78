use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dsyk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsyk"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("DSYK_OUT_DIR")
        .output()
        .unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

fn sidecar(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

const SMALL: [&str; 8] = ["--n", "4", "--mu", "0.2", "--times", "0:2:0.5", "--n-steps", "30"];

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let traj = ["--n-traj", "100", "--batch-size", "20"];
    let runs: Vec<(Vec<&str>, &str, &str)> = vec![
        (vec!["traj"], "traj.csv", "t,gamma,gamma_err,S,S_err,N,q,mu,beta,n_traj,n_disorder,seed"),
        (vec!["oracle"], "oracle.csv", "t,gamma,gamma_err,S,S_err,N,q,mu,beta,n_traj,n_disorder,seed"),
        (vec!["page-curve"], "page_curve.csv", "t,S_diag,S_worm,S_min,dominant,residual_diag,residual_worm"),
        (vec!["phase-diagram", "--mu-list", "0.05,0.2", "--mu-t-list", "0.2,0.6,1.0"], "phase_diagram.csv", "mu,slope_gap,page_time"),
        (vec!["largeq", "--q", "8"], "largeq_green.csv", "u,u2,equilibrium_g,twist_g"),
        (vec!["largeq", "--q", "8"], "largeq_entropy.csv", "t,S_over_N"),
        (
            vec!["compare"],
            "compare.csv",
            "t,S_traj,S_traj_err,S_oracle,S_saddle,S_largeq,traj_minus_oracle,traj_minus_saddle,traj_minus_largeq,saddle_minus_largeq",
        ),
        (vec!["green-dump", "--t", "1", "--regime", "short-time"], "green_diff.csv", "component,u,u2,saddle,large_q,diff"),
    ];
    for (cmd, file, header) in runs {
        let mut args = cmd.clone();
        args.extend(SMALL);
        args.extend(traj);
        let out = dsyk(d, &args);
        assert!(out.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
        let l = lines(&d.join(file));
        assert!(l[0].starts_with("# dsyk "), "{file}: {}", l[0]);
        assert!(l[0].contains("config_sha256="));
        assert_eq!(l[1], header, "{file}");
    }
}

#[test]
fn provenance_matches_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsyk(dir.path(), &["traj", "--n", "4", "--times", "0,1", "--n-traj", "100", "--batch-size", "25", "--seed", "9"]);
    assert!(out.status.success());
    let meta = sidecar(&dir.path().join("traj.json"));
    let hash = meta["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let first = &lines(&dir.path().join("traj.csv"))[0];
    assert!(first.contains(hash));
    assert!(first.contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(meta["seeds"]["master_seed"], 9);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    // 17 significant digits
    let row = &lines(&dir.path().join("traj.csv"))[3];
    let gamma = row.split(',').nth(1).unwrap();
    let mantissa = gamma.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{gamma}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let mut args = vec!["page-curve"];
        args.extend(SMALL);
        assert!(dsyk(d, &args).status.success());
        let mut args = vec!["traj", "--n-traj", "100", "--batch-size", "20"];
        args.extend(SMALL);
        assert!(dsyk(d, &args).status.success());
    }
    for f in ["page_curve.csv", "page_curve.json", "traj.csv", "traj.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "model": {"n": 4, "q": 4, "j": 1.0, "mu": 0.1, "beta": 0.0}, "times": [0.0, 1.0]}"#,
    )
    .unwrap();
    let out = dsyk(dir.path(), &["oracle", "--config", cfg.to_str().unwrap(), "--mu", "0.3"]);
    assert!(out.status.success());
    let meta = sidecar(&dir.path().join("oracle.json"));
    assert_eq!(meta["config"]["model"]["mu"], 0.3);
    assert_eq!(meta["config"]["times"], serde_json::json!([0.0, 1.0]));
}

#[test]
fn output_directory_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dsyk"))
        .args(["largeq", "--times", "0,1"])
        .env("DSYK_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("largeq_green.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = dsyk(d, &["page-curve", "--times", ""]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("empty"));

    let cfg = d.join("old.json");
    std::fs::write(&cfg, r#"{"schema_version": 99}"#).unwrap();
    let out = dsyk(d, &["traj", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("schema_version"));

    assert_eq!(dsyk(d, &["traj", "--n", "5"]).status.code(), Some(2));
    assert_eq!(dsyk(d, &["oracle", "--n", "20"]).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "saddle": {"solver": {"max_iter": 2, "tol": 1e-14}}}"#).unwrap();
    let out = dsyk(dir.path(), &["green-dump", "--config", cfg.to_str().unwrap(), "--n-steps", "30"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "numerical");
    assert!(dir.path().join("green.json").exists());
}

#[test]
fn compare_refuses_mismatched_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(dsyk(d, &["oracle", "--n", "4", "--mu", "0.2", "--times", "0,1"]).status.success());
    let prior = d.join("oracle.json");
    let out = dsyk(d, &["compare", "--inputs", prior.to_str().unwrap(), "--mu", "0.1", "--n", "6", "--skip-traj"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_json(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("model.mu") && msg.contains("model.n"), "{msg}");

    // matching parameters reuse the prior oracle curve
    let out = dsyk(d, &["compare", "--inputs", prior.to_str().unwrap(), "--skip-traj", "--n-steps", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let l = lines(&d.join("compare.csv"));
    let row: Vec<&str> = l[3].split(',').collect();
    let oracle: f64 = row[3].parse().unwrap();
    let meta = sidecar(&prior);
    let want = meta["result"]["entropy"][1].as_f64().unwrap() / 4.0;
    assert!((oracle - want).abs() < 1e-15);
}

#[test]
fn thread_bound_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["traj", "--n", "4", "--times", "0,1,2", "--n-traj", "120", "--batch-size", "20", "--n-disorder", "2"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut three = base.to_vec();
    three.extend(["--threads", "3"]);
    assert!(dsyk(a.path(), &one).status.success());
    assert!(dsyk(b.path(), &three).status.success());
    assert_eq!(std::fs::read(a.path().join("traj.csv")).unwrap(), std::fs::read(b.path().join("traj.csv")).unwrap());
}
