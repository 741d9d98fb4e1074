//! End-to-end command-line checks: every subcommand against the shipped
//! data, plus config-file merging.

use std::path::PathBuf;
use std::process::Command;

fn data(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(file)
        .display()
        .to_string()
}

fn wanes() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wanes"))
}

#[test]
fn solve_writes_equilibrium_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wanes()
        .args([
            "solve",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
            "--k-paths",
            "8",
            "--tol",
            "1e-5",
            "--out-dir",
            tmp.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("phi_star"), "{stdout}");
    let csv = std::fs::read_to_string(tmp.path().join("equilibrium.csv")).unwrap();
    assert!(csv.lines().count() > 40);
}

#[test]
fn simulate_then_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let out = wanes()
        .args([
            "simulate",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
            "--attack",
            "unif@30",
            "--horizon",
            "100",
            "--replications",
            "10",
            "--seed",
            "7",
            "--out-dir",
            run_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = wanes()
        .args(["report", "--run-dir", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("attack unif@30"), "{stdout}");
    assert!(stdout.contains("spike ratios"), "{stdout}");
}

#[test]
fn baseline_runs_on_same_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wanes()
        .args([
            "baseline",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
            "--attack",
            "unif@30",
            "--horizon",
            "60",
            "--replications",
            "3",
            "--seed",
            "7",
            "--out-dir",
            tmp.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"command\": \"baseline\""));
}

#[test]
fn constants_prints_theory_values() {
    let out = wanes()
        .args([
            "constants",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
            "--attack",
            "unif@1",
            "--capped",
            "--horizon",
            "200",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("r_value"), "{stdout}");
    assert!(stdout.contains("distance_log_coeff"), "{stdout}");
}

#[test]
fn validate_passes_on_shipped_data() {
    let out = wanes()
        .args([
            "validate",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn config_file_merges_under_cli_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "net = {}\ntrips = {}\nhorizon = 10\nreplications = 25\nseed = 9\nattack = unif@5\n",
            data("siouxfalls_net.tntp"),
            data("siouxfalls_evac_trips.tntp"),
        ),
    )
    .unwrap();
    let run_dir = tmp.path().join("out");
    // CLI overrides replications; horizon comes from the file.
    let out = wanes()
        .args([
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--replications",
            "2",
            "--out-dir",
            run_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(run_dir.join("summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed["config"]["replications"], 2);
    assert_eq!(parsed["config"]["horizon"], 10);
    assert_eq!(parsed["config"]["master_seed"], 9);
    assert_eq!(parsed["config"]["attacks"][0]["t0"], 5);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = wanes().args(["simulate", "--frobnicate"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn seed_env_var_is_the_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wanes()
        .env("WANES_SEED", "31415")
        .args([
            "simulate",
            "--net",
            &data("siouxfalls_net.tntp"),
            "--trips",
            &data("siouxfalls_evac_trips.tntp"),
            "--horizon",
            "5",
            "--replications",
            "1",
            "--out-dir",
            tmp.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed["config"]["master_seed"], 31415);
}
