use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nsk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsk")).args(args).output().expect("spawn nsk")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, patch: serde_json::Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "grid": {"d": 2, "n": 16, "L": 24.0},
        "params": {"mu": 1.0, "lambda": 0.0, "kappa": 1.0},
        "initial": {"epsilon": 0.001, "width": 1.5},
        "time": {"dt": 0.05, "scheme": "ETD-RK2", "t_final": 5.0, "snapshots": {"kind": "geometric", "count": 30}},
        "norms": [
            {"name": "a_b0", "target": "a", "s": 0, "p": 2, "sigma": 1},
            {"name": "u_cl", "target": "u", "s": 0, "p": 2, "sigma": 1, "r": 1}
        ],
        "norm_every": 2
    });
    for (k, v) in patch.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_postprocess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), serde_json::json!({}));
    let traj = dir.path().join("traj");
    let o = nsk(&["simulate", "--config", s(&cfg), "--out", s(&traj), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["manifest.json", "config.json", "diagnostics.csv", "snapshots.csv", "moments.json", "summary.json"] {
        assert!(traj.join(f).is_file(), "missing {f}");
    }
    let manifest = json(&traj.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["content_hash"].as_str().unwrap().len(), 64);
    let summary = json(&traj.join("summary.json"));
    assert_eq!(summary["status"], "complete");
    assert_eq!(summary["mass_ok"], true);
    assert!(summary["chemin_lerner"]["u_cl"].as_f64().unwrap() > 0.0);

    let diag = fs::read_to_string(traj.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,mass,a_b0,u_cl\r\n"));

    // Norms over the trajectory directory.
    let norms_out = dir.path().join("norms");
    let o = nsk(&["norms", "--config", s(&cfg), "--out", s(&norms_out), s(&traj)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(norms_out.join("norms.csv")).unwrap();
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][0], "u_cl");
    assert!(rows[1][5].parse::<f64>().unwrap() > 0.0);

    // A single snapshot cannot give a time norm.
    let snap = traj.join("snapshots/snap_0000.nskfld");
    let o = nsk(&["norms", "--config", s(&cfg), "--out", s(&norms_out), s(&snap)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("norms[1].r"), "{}", stderr(&o));

    // Decay fit of a diagnostics column, without and with a target.
    let fit_out = dir.path().join("fit");
    let o = nsk(&["decay-fit", "--out", s(&fit_out), s(&traj.join("diagnostics.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = json(&fit_out.join("decay_fit.json"));
    assert_eq!(fit["name"], "mass");
    assert!(fit["pass"].is_null());
    let fit_cfg = dir.path().join("fit.json");
    fs::write(&fit_cfg, r#"{"decay_fit": {"column": "a_b0", "target": 5.0, "tolerance": 0.01}}"#).unwrap();
    let o = nsk(&["decay-fit", "--config", s(&fit_cfg), "--out", s(&fit_out), s(&traj.join("diagnostics.csv"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(json(&fit_out.join("decay_fit.json"))["pass"], false);

    // Asymptotic comparison writes a report and its sibling manifest.
    let report = dir.path().join("asym/report.json");
    let o = nsk(&["asymptotics", "--traj", s(&traj), "--s", "0", "--p", "2", "--out", s(&report)]);
    assert!([0, 3].contains(&code(&o)), "{}", stderr(&o));
    assert!(dir.path().join("asym/report.manifest.json").is_file());
    let r = json(&report);
    assert!(!r["weighted_error_series"].as_array().unwrap().is_empty());
    assert_eq!(r["decay_fits"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), serde_json::json!({"initial": {"epsilon": 0.001, "family": "random", "width": 1.5}}));
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nsk(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "3"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["diagnostics.csv", "snapshots/snap_0005.nskfld", "moments.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"grid": {"d": 2, "n": 16, "L": 1.0}, "time": {"dt": 0.1, "scheme": "ETD-RK2", "t_final": 1, "stride": 2}}"#).unwrap();
    let o = nsk(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("config field time"), "{}", stderr(&o));
    assert!(stderr(&o).contains("stride"));
    assert!(!dir.path().join("x").exists(), "nothing is written for an invalid config");

    fs::write(&cfg, r#"{"params": {"mu": -1, "kappa": 1}}"#).unwrap();
    let o = nsk(&["linear-verify", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("params.mu"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&nsk(&["frobnicate"])), 1);
    assert_eq!(code(&nsk(&["acceptance", "--level", "medium"])), 1);
    assert_eq!(code(&nsk(&["--help"])), 0);
    assert_eq!(code(&nsk(&["--version"])), 0);
}

#[test]
fn guard_violation_aborts_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        serde_json::json!({
            "initial": {"epsilon": 0.3, "width": 1.5},
            "time": {"dt": 0.05, "scheme": "ETD-RK2", "t_final": 5.0, "guards": {"vacuum": 0.1, "radius_fraction": 0.2}}
        }),
    );
    let out = dir.path().join("run");
    let o = nsk(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn linear_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lv.json");
    fs::write(&cfg, r#"{"grid": {"d": 1, "n": 16, "L": 10.0}, "params": {"mu": 0.5, "kappa": 1}, "linear_verify": {"samples": 20}}"#)
        .unwrap();
    let out = dir.path().join("lv");
    let o = nsk(&["linear-verify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("linear_verify.json"));
    assert_eq!(r["pass"], true);
    assert!(r["c0_fit"].as_f64().unwrap() > 0.0);
}

#[test]
fn gevrey_writes_components_and_radius() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), serde_json::json!({"gevrey": {"every": 2, "radius_every": 10}}));
    let out = dir.path().join("g");
    let o = nsk(&["gevrey", "--config", s(&cfg), "--out", s(&out)]);
    assert!([0, 3].contains(&code(&o)), "{}", stderr(&o));
    let r = json(&out.join("gevrey.json"));
    assert_eq!(r["components"].as_array().unwrap().len(), 4);
    assert!(r["c0"].as_f64().unwrap() > 0.0);
    assert!(out.join("radius.csv").is_file());
    assert!(out.join("gevrey.csv").is_file());
}
