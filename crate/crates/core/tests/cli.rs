mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{GOLDEN, SILVER};
use pkam::io::{load_torus, read_log};
use serde_json::Value;
use tempfile::TempDir;

fn pkam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkam"))
        .args(args)
        .current_dir(dir)
        .env("PKAM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write_config(dir: &Path, name: &str, strength: f64, extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        format!(
            "seed = 3\n\n[family]\nname = \"coupled_standard\"\nstrength = {strength}\ncoupling = 0.1\ndrift = {SILVER:?}\n\n\
             [frequency]\nomega = [{GOLDEN:?}, {SILVER:?}]\n\n[torus]\ntruncation = [24, 24]\n\n\
             [verify]\nsamples = 200\norbit_length = 200\npresymplectic_samples = 200\n{extra}"
        ),
    )
    .unwrap();
    path
}

fn solved(dir: &TempDir) -> (PathBuf, PathBuf) {
    let config = write_config(dir.path(), "run.toml", 0.2, "");
    let out = pkam(
        &["solve", "--config", "run.toml", "--out", "torus.json", "--log", "run.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (config, dir.path().join("torus.json"))
}

#[test]
fn solve_writes_torus_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = {
        write_config(dir.path(), "run.toml", 0.2, "");
        pkam(
            &["solve", "--config", "run.toml", "--out", "torus.json", "--log", "run.csv"],
            dir.path(),
        )
    };
    assert!(out.status.success());
    let summary = json(&out);
    assert_eq!(summary["converged"], true);
    assert!(summary["final_error"].as_f64().unwrap() <= 1e-12);
    assert!(summary["verification"]["off_grid_sup"].as_f64().unwrap() <= 1e-10);

    let stored = load_torus(&dir.path().join("torus.json")).unwrap();
    assert_eq!(stored.lambda.as_ref().map(Vec::len), Some(3));
    assert_eq!(stored.omega, Some(vec![GOLDEN, SILVER]));

    let text = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(text.starts_with("# pkam "));
    assert!(text.contains("strength = 0.2"));
    let rows = read_log(text.as_bytes()).unwrap();
    assert_eq!(rows.len() as u64, summary["iterations"].as_u64().unwrap());
    assert!(rows.windows(2).all(|w| w[1].iter == w[0].iter + 1));
    assert!(rows.iter().all(|r| r.accepted));
}

#[test]
fn verify_certifies_a_solved_torus_and_rejects_a_wrong_map() {
    let dir = tempfile::tempdir().unwrap();
    let (_, torus) = solved(&dir);
    let torus = torus.to_str().unwrap();

    let ok = pkam(&["verify", "--torus", torus, "--config", "run.toml"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(json(&ok)["certified"], true);

    write_config(dir.path(), "other.toml", 0.25, "");
    let bad = pkam(&["verify", "--torus", torus, "--config", "other.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let report = json(&bad);
    assert_eq!(report["certified"], false);
    assert!(report["failures"].as_array().unwrap().iter().any(|f| f == "off_grid"));
}

#[test]
fn diagnose_reports_on_torus_and_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let (_, torus) = solved(&dir);
    let out = pkam(
        &["diagnose", "--torus", torus.to_str().unwrap(), "--config", "run.toml"],
        dir.path(),
    );
    assert!(out.status.success());
    let report = json(&out);
    assert!(report["error_norm"].as_f64().unwrap() <= 1e-12);
    assert!(report["blocks"]["c31"].as_f64().unwrap() <= 1e-9);
    assert_eq!(report["twist"]["singular"], false);

    let freq = pkam(
        &["diagnose", "--frequency", "--omega", &format!("{GOLDEN},{SILVER}"), "--radius", "20"],
        dir.path(),
    );
    assert!(freq.status.success());
    let scan = json(&freq);
    assert!(scan["gamma_estimate"].as_f64().unwrap() > 0.0);
    assert_eq!(scan["radius"], 20);

    let resonant = pkam(&["diagnose", "--frequency", "--omega", "0.5,0.25"], dir.path());
    assert_eq!(resonant.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&resonant.stderr).contains("frequency rejected"));
}

#[test]
fn align_finds_no_phase_between_a_torus_and_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (_, torus) = solved(&dir);
    let t = torus.to_str().unwrap();
    let out = pkam(&["align", "--a", t, "--b", t], dir.path());
    assert!(out.status.success());
    let al = json(&out);
    for tau in al["tau"].as_array().unwrap() {
        assert_eq!(tau.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn continuation_stops_with_exit_code_two_past_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "sweep.toml",
        0.0,
        "\n[solver]\nmax_iterations = 12\n\n[continuation]\nknob = \"strength\"\nschedule = [0.1, 0.3, 1.2]\n",
    );
    let out = pkam(&["continue", "--config", "sweep.toml", "--out-dir", "stages"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert_eq!(summary["stages"].as_array().unwrap().len(), 2);
    assert_eq!(summary["failure"]["knob"], 1.2);
    assert!(dir.path().join("stages/stage_000.json").exists());
    assert!(dir.path().join("stages/stage_001.json").exists());
    assert!(!dir.path().join("stages/stage_002.json").exists());
}

#[test]
fn input_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "typo.toml", 0.2, "\n[solver]\nmax_iteration = 3\n");
    let out = pkam(&["solve", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let missing = pkam(&["solve", "--config", "absent.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    write_config(dir.path(), "run.toml", 0.2, "");
    let threads = Command::new(env!("CARGO_BIN_EXE_pkam"))
        .args(["solve", "--config", "run.toml"])
        .current_dir(dir.path())
        .env("PKAM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&threads.stderr).contains("PKAM_THREADS"));
}

#[test]
fn failed_solve_saves_the_best_iterate() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "hard.toml", 1.2, "\n[solver]\nmax_iterations = 4\n");
    let out = pkam(&["solve", "--config", "hard.toml", "--out", "best.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
    assert!(load_torus(&dir.path().join("best.json")).is_ok());
}
