use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_openhier"));
    c.env_remove("OPENHIER_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn run(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    bin()
        .arg(verb)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .unwrap()
        .code()
        .unwrap()
}

/// Parses rho.csv into rows of numbers, skipping the header.
fn rho(out: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(out.join("rho.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const UNCOUPLED: &str = r#"
[system]
statistics = "bosonic"
hamiltonian = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]
couplings = [[[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]]
initial = [[0.6, 0.0], [0.0, 0.8]]

[bath.discrete]
n_max = 3
channels = [{ couplings = [[0.0, 0.0]], frequencies = [1.0] }]

[grid]
t1 = 3.0
steps = 30
"#;

#[test]
fn oracle_without_coupling_keeps_populations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", UNCOUPLED);
    let out = tmp.path().join("o");
    assert_eq!(run("oracle", &cfg, &out, &[]), 0);
    let rows = rho(&out);
    assert_eq!(rows.len(), 31);
    // columns: t, then re/im of rho row-major
    for r in &rows {
        assert!((r[1] - 0.36).abs() < 1e-12, "{r:?}");
        assert!((r[7] - 0.64).abs() < 1e-12, "{r:?}");
    }
    assert_eq!(summary(&out)["status"], "ok");
}

#[test]
fn fermionic_master_matches_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = configs().join("master_fermion_discrete.toml");
    assert_eq!(run("master-fermion", &cfg, &out, &[]), 0);
    let s = summary(&out);
    let dev = s["max_deviation_vs_oracle"].as_f64().unwrap();
    assert!(dev <= 1e-6, "{dev}");
    assert!(s["trace_drift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn depth_sweep_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("sweep", &configs().join("sweep_depth.toml"), &out, &[]), 0);
    let s = summary(&out);
    let pts = s["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    let d4 = pts[1]["max_diff_to_previous"].as_f64().unwrap();
    let d6 = pts[2]["max_diff_to_previous"].as_f64().unwrap();
    assert!(d6 < d4, "{d4} {d6}");
    for v in ["depth-2", "depth-4", "depth-6"] {
        assert!(out.join(v).join("rho.csv").exists());
    }
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn hops_is_bit_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("hops_tls.toml"))
        .unwrap()
        .replace("trajectories = 1000", "trajectories = 40");
    let cfg = write(tmp.path(), "h.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("hops", &cfg, &a, &["--threads", "1"]), 0);
    let status = bin()
        .args(["hops", "--out"])
        .arg(&b)
        .arg("--config")
        .arg(&cfg)
        .env("OPENHIER_THREADS", "4")
        .status()
        .unwrap();
    assert!(status.success());
    let ra = std::fs::read(a.join("rho.csv")).unwrap();
    let rb = std::fs::read(b.join("rho.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(summary(&b)["threads"], 4);
}

#[test]
fn thread_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let status = bin()
        .args(["verify", "--threads", "2", "--out"])
        .arg(&out)
        .env("OPENHIER_THREADS", "3")
        .status()
        .unwrap();
    assert!(status.success());
    let s = summary(&out);
    assert_eq!(s["threads"], 2);
    assert_eq!(s["identities_hold"], true);
}

#[test]
fn schema_error_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &UNCOUPLED.replace("steps = 30", "steps = \"x\""));
    let out = tmp.path().join("o");
    assert_eq!(run("oracle", &cfg, &out, &[]), 2);
    let s = summary(&out);
    assert_eq!(s["status"], "error");
    assert_eq!(s["error"]["exit_code"], 2);
}

#[test]
fn incompatible_solver_exits_with_schema_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = configs().join("master_fermion_discrete.toml");
    assert_eq!(run("hops", &cfg, &out, &[]), 2);
    assert_eq!(summary(&out)["error"]["kind"], "incompatible_solver");
}

#[test]
fn guard_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    // 30 fermionic modes exceed the auxiliary space guard of the full truncation.
    let modes: Vec<String> = (0..30).map(|_| "[0.1, 0.0, 1.0, 0.5]".to_string()).collect();
    let text = format!(
        r#"
[system]
statistics = "fermionic"
hamiltonian = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]
couplings = [[[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]]
initial = [[1.0, 0.0], [0.0, 0.0]]

[bath]
modes = [[{}]]

[grid]
t1 = 1.0
steps = 10
"#,
        modes.join(", ")
    );
    let cfg = write(tmp.path(), "g.toml", &text);
    let out = tmp.path().join("o");
    assert_eq!(run("master-fermion", &cfg, &out, &[]), 4);
    assert_eq!(summary(&out)["error"]["exit_code"], 4);
}

#[test]
fn bcf_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("bcf", &configs().join("bcf_lorentzian.toml"), &out, &[]), 0);
    assert!(out.join("bcf.csv").exists());
    let conv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 2 * 6);
    assert!(summary(&out)["max_abs_error"].as_f64().unwrap() < 1e-4);
}
