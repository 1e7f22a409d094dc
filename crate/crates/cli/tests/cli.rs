use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

fn run(dir: &Path, command: &str, config: &Value, out: &str, extra: &[&str]) -> (i32, PathBuf) {
    let cfg = dir.join(format!("{out}.json"));
    std::fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let out_dir = dir.join(out);
    let status = Command::new(env!("CARGO_BIN_EXE_critmetric"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(extra)
        .status()
        .unwrap();
    (status.code().unwrap(), out_dir)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn line_config(m: i64) -> Value {
    json!({
        "schema": "critmetric/v1",
        "model": "P1",
        "m": m,
        "seed": 5,
        "quadrature": { "resolution": 32 },
        "start": { "perturbation": 0.2 }
    })
}

#[test]
fn balance_converges_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let (code, out) = run(dir.path(), "balance", &line_config(3), "bal", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["status"], "converged");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["command"], "balance");
    let names: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    for want in ["state.json", "convergence.csv", "report.json"] {
        assert!(names.contains(&want), "{names:?}");
    }
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("iteration,residual,gram_defect,energy_delta"));

    // the saved state restarts at a critical point
    let mut cfg = line_config(3);
    cfg["start"] = json!({ "state": out.join("state.json") });
    let (code, again) = run(dir.path(), "balance", &cfg, "again", &[]);
    assert_eq!(code, 0);
    assert_eq!(read_json(&again.join("report.json"))["iterations"], 0);
}

#[test]
fn non_convergence_exits_2() {
    let dir = TempDir::new().unwrap();
    let mut cfg = line_config(3);
    cfg["solver"] = json!({ "max_iter": 0 });
    let (code, out) = run(dir.path(), "balance", &cfg, "stuck", &[]);
    assert_eq!(code, 2);
    assert_eq!(read_json(&out.join("manifest.json"))["exit_code"], 2);
}

#[test]
fn invalid_input_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut cfg = line_config(2);
    cfg["model"] = json!("P1xP1");
    cfg["torus"] = json!([[1, 0, 0]]);
    assert_eq!(run(dir.path(), "balance", &cfg, "torus", &[]).0, 3);
    let mut cfg = line_config(2);
    cfg["unknown"] = json!(1);
    assert_eq!(run(dir.path(), "balance", &cfg, "field", &[]).0, 3);
    let mut cfg = line_config(2);
    cfg["schema"] = json!("critmetric/v0");
    assert_eq!(run(dir.path(), "density", &cfg, "schema", &[]).0, 3);
    let cfg = line_config(2);
    assert_eq!(run(dir.path(), "git", &cfg, "empty", &[]).0, 3);
}

#[test]
fn git_on_triangle_weights_is_closed() {
    let dir = TempDir::new().unwrap();
    let mut cfg = line_config(1);
    cfg["git"] = json!({ "weights": [[1, 0], [-1, 1], [0, -1]], "covering_samples": 200 });
    let (code, out) = run(dir.path(), "git", &cfg, "git", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("git.json"));
    assert_eq!(report["verdict"]["status"], "closed");
    assert_eq!(report["covering_consistent"], true);

    cfg["git"] = json!({ "weights": [[1, 0], [0, 1]] });
    let (code, out) = run(dir.path(), "git", &cfg, "git2", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("git.json"));
    assert_eq!(report["verdict"]["status"], "not-closed");
    assert!(report["verdict"]["witness"].is_array());
}

#[test]
fn untwisted_density_matches_zero_twist() {
    let dir = TempDir::new().unwrap();
    let cfg = line_config(3);
    let (code, plain) = run(dir.path(), "density", &cfg, "plain", &[]);
    assert_eq!(code, 0);
    let mut twisted = cfg.clone();
    twisted["density"] = json!({ "y": [] });
    let (code, zero) = run(dir.path(), "density", &twisted, "zero", &[]);
    assert_eq!(code, 0);
    let a = std::fs::read_to_string(plain.join("density.csv")).unwrap();
    let b = std::fs::read_to_string(zero.join("density.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = line_config(2);
    let (c1, a) = run(dir.path(), "balance", &cfg, "a", &[]);
    let (c2, b) = run(dir.path(), "balance", &cfg, "b", &[]);
    assert_eq!((c1, c2), (0, 0));
    let digests = |p: &Path| -> Vec<Value> {
        let m = read_json(&p.join("manifest.json"));
        m["outputs"].as_array().unwrap().iter().map(|f| f["sha256"].clone()).collect()
    };
    assert_eq!(digests(&a), digests(&b));
    assert_eq!(read_json(&a.join("manifest.json"))["config_sha256"], read_json(&b.join("manifest.json"))["config_sha256"]);

    let (_, c) = run(dir.path(), "balance", &cfg, "c", &["--seed", "6"]);
    assert_ne!(digests(&a), digests(&c));
}

#[test]
fn chow_path_is_convex() {
    let dir = TempDir::new().unwrap();
    let mut cfg = line_config(3);
    cfg["chow"] = json!({ "gamma": [2, 1, -1, -2], "t_max": 1.5, "points": 7 });
    let (code, out) = run(dir.path(), "chow", &cfg, "chow", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("chow.json"));
    assert!(report["convexity_residual"].as_f64().unwrap() >= -1e-6);
    assert_eq!(report["verdict"], "closed");
    let rows = std::fs::read_to_string(out.join("path.csv")).unwrap().lines().count();
    assert_eq!(rows, 8);
}

#[test]
fn extremal_on_fubini_study() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "schema": "critmetric/v1",
        "model": "P1",
        "m": 1,
        "quadrature": { "resolution": 32 },
        "extremal": { "levels": [8, 16, 32] }
    });
    let (code, out) = run(dir.path(), "extremal", &cfg, "ext", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("extremal.json"));
    assert!((report["extremal"]["alpha0"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(report["order0_flagged"], false);

    let mut bad = cfg.clone();
    bad["start"] = json!({ "perturbation": 0.2 });
    assert_eq!(run(dir.path(), "extremal", &bad, "offdiag", &[]).0, 3);
}
