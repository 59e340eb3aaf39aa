//! Command-line behavior: outputs, manifests, and error handling.

use std::path::Path;
use std::process::Command;

fn mcvd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mcvd"))
        .args(args)
        .output()
        .expect("spawn mcvd")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn coeffs_writes_one_file_per_distance_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), "distances = [4.0, 8.0]\neta_max = 3\n");
    let out = tmp.path().join("out");
    let res = mcvd(&[
        "coeffs",
        "--config",
        &scenario,
        "--provenance",
        "analytical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());

    for d in ["4", "8"] {
        let file = out.join(format!("coeffs_d{d}_analytical.json"));
        let text = std::fs::read_to_string(&file).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        let p = json["data"]["p"].as_array().unwrap();
        assert_eq!(p.len(), 4);
        let total: f64 = p.iter().map(|v| v.as_f64().unwrap()).sum();
        assert!(total < 1.0);
        assert_eq!(json["data"]["provenance"], "analytical");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "coeffs");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["spec"]["seed"], 1);
}

#[test]
fn simulate_impulse_emits_csv_and_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        "distances = [4.0]\neta_max = 2\nmicro_step_divisor = 200.0\n",
    );
    let out = tmp.path().join("out");
    let res = mcvd(&[
        "simulate",
        "--mode",
        "impulse",
        "--config",
        &scenario,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(out.join("impulse_d4.csv")).unwrap();
    assert!(csv.starts_with("slot,count\n0,"));
    assert_eq!(csv.lines().count(), 4);
    let envelope: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("impulse_d4.json")).unwrap())
            .unwrap();
    assert_eq!(envelope["config"]["distance"], 4.0);
    assert_eq!(envelope["data"]["emitted"], 100_000);
}

#[test]
fn rate_table_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        "distances = [4.0]\neta_max = 2\ntaus = [8, 12]\np_ones = [0.5]\n",
    );
    let out = tmp.path().join("out");
    let res = mcvd(&[
        "rate",
        "--config",
        &scenario,
        "--provenance",
        "analytical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let table = std::fs::read_to_string(out.join("rate_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,t_s,rate_eta1_bits_per_use,rate_eta_full_bits_per_use,bits_per_sec"
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let (d, t_s, _rate1, rate_full, bits_per_sec) = (row[0], row[1], row[2], row[3], row[4]);
    assert_eq!(d, 4.0);
    assert_eq!(t_s, 0.4);
    assert_eq!(bits_per_sec, rate_full / t_s);

    assert!(out.join("rate_surface_d4_eta1.csv").exists());
    assert!(out.join("rate_surface_d4_eta2.csv").exists());
    assert!(out.join("rate_summary_d4_eta2.json").exists());
}

#[test]
fn sweep_nests_one_run_per_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        "distances = [4.0]\netas = [1]\neta_max = 2\ntaus = [10]\np_ones = [0.5]\n",
    );
    let out = tmp.path().join("out");
    let res = mcvd(&[
        "sweep",
        "--config",
        &scenario,
        "--provenance",
        "analytical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    for stage in ["coeffs", "verify", "rate"] {
        assert!(out.join(stage).join("manifest.json").exists(), "{stage}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert!(out.join("verify").join("fit_grid.csv").exists());
    assert!(out.join("rate").join("rate_table.csv").exists());
}

#[test]
fn malformed_scenario_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), "distances = [4.0]\nunknown_knob = 3\n");
    let res = mcvd(&["coeffs", "--config", &scenario]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn inconsistent_axes_fail() {
    let tmp = tempfile::tempdir().unwrap();
    // etas beyond eta_max must be rejected up front.
    let scenario = write_scenario(tmp.path(), "etas = [1, 9]\neta_max = 3\n");
    let res = mcvd(&["verify", "--config", &scenario]);
    assert!(!res.status.success());
}
