//! End-to-end workflow through the binary: simulate, estimate, irf,
//! diagnose, export, plus exit-code and reproducibility contracts.

use std::path::Path;
use std::process::Command;

fn fsvar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fsvar"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn sim_config(dir: &Path, t_len: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join("sim.json");
    write(
        &path,
        &format!(
            r#"{{
                "output_dir": "data",
                "t_len": {t_len},
                "m": 2, "n_core": 7, "n_other": 3,
                "factors": 3, "lags": 2,
                "seed": {seed}
            }}"#
        ),
    );
    path
}

fn run_config(dir: &Path, draws: usize, burn: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join("run.json");
    write(
        &path,
        &format!(
            r#"{{
                "data": "data/dataset.csv",
                "schema": "data/schema.json",
                "scheme": "data/scheme.json",
                "output_dir": "run",
                "lags": 2, "factors": 3,
                "features": {{"tv_loadings": false, "stoch_vol": false, "student_t": false}},
                "draws": {draws}, "burn": {burn}, "thin": 2,
                "seed": {seed}
            }}"#
        ),
    );
    path
}

#[test]
fn full_workflow_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 160, 5);
    let status = fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap();
    assert!(status.success());
    for f in ["dataset.csv", "schema.json", "truth.json", "scheme.json"] {
        assert!(tmp.path().join("data").join(f).exists(), "{f} missing");
    }

    let run = run_config(tmp.path(), 150, 50, 5);
    let status = fsvar()
        .args(["estimate", "--config"])
        .arg(&run)
        .args(["--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let run_dir = tmp.path().join("run");
    for f in ["spec.json", "draws.bin", "diagnostics.csv", "log.txt"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    // The resolved config is fully explicit: inferred bounds materialized,
    // scheme inlined.
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("spec.json")).unwrap()).unwrap();
    assert!(resolved["sample_start"].is_string());
    assert!(resolved["sample_end"].is_string());
    assert!(resolved["scheme_inline"]["rows"].is_array());
    assert!(resolved["quantiles"].is_array());

    let status = fsvar()
        .args(["irf", "--run"])
        .arg(&run_dir)
        .args(["--horizon", "8", "--shocks", "0,1"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(run_dir.join("irf_Target_shock.csv").exists());
    assert!(run_dir.join("irf_Target_shock_std.csv").exists());
    assert!(run_dir.join("irf_Path_shock.json").exists());

    // Quantile columns monotone per row.
    let csv = std::fs::read_to_string(run_dir.join("irf_Target_shock.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let qs: Vec<f64> = fields[3..8].iter().map(|v| v.parse().unwrap()).collect();
        for w in qs.windows(2) {
            assert!(w[0] <= w[1], "quantiles not monotone: {line}");
        }
    }

    let status = fsvar().args(["diagnose", "--run"]).arg(&run_dir).status().unwrap();
    assert!(status.success());
    assert!(run_dir.join("diagnose.csv").exists());

    let status = fsvar().args(["export", "--run"]).arg(&run_dir).status().unwrap();
    assert!(status.success());
    let exported = std::fs::read_to_string(run_dir.join("draws.csv")).unwrap();
    assert_eq!(exported.lines().count(), 1 + 75); // header + draws/thin
}

#[test]
fn simulate_deterministic_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 100, 9);
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let first = std::fs::read(tmp.path().join("data/dataset.csv")).unwrap();
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let second = std::fs::read(tmp.path().join("data/dataset.csv")).unwrap();
    assert_eq!(first, second, "same seed must produce identical bytes");

    assert!(fsvar()
        .args(["simulate", "--config"])
        .arg(&sim)
        .args(["--seed", "10"])
        .status()
        .unwrap()
        .success());
    let third = std::fs::read(tmp.path().join("data/dataset.csv")).unwrap();
    assert_ne!(first, third, "seed override must change the data");
}

#[test]
fn invalid_simulation_config_exits_2_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 0, 1);
    let status = fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!tmp.path().join("data").join("dataset.csv").exists());
}

#[test]
fn estimate_validation_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 120, 2);
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    // factors < instruments: invalid.
    let path = tmp.path().join("bad.json");
    write(
        &path,
        r#"{
            "data": "data/dataset.csv",
            "schema": "data/schema.json",
            "scheme": "data/scheme.json",
            "output_dir": "run",
            "lags": 2, "factors": 1,
            "draws": 50, "burn": 10, "thin": 1, "seed": 2
        }"#,
    );
    let out = fsvar().args(["estimate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fsvar()
        .args(["irf", "--run"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    let out = fsvar().args(["diagnose", "--run"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn corrupted_draws_detected_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 120, 3);
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let run = run_config(tmp.path(), 100, 20, 3);
    assert!(fsvar().args(["estimate", "--config"]).arg(&run).status().unwrap().success());
    let draws_path = tmp.path().join("run/draws.bin");
    let mut bytes = std::fs::read(&draws_path).unwrap();
    let last = bytes.len() - 20;
    bytes[last] ^= 0x55;
    std::fs::write(&draws_path, &bytes).unwrap();
    let out = fsvar()
        .args(["irf", "--run"])
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checksum") || stderr.contains("integrity"), "{stderr}");
}

#[test]
fn multi_chain_layout_and_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 300, 4);
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let run = run_config(tmp.path(), 3000, 1500, 4);
    let status = fsvar()
        .args(["estimate", "--config"])
        .arg(&run)
        .args(["--chains", "2", "--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let run_dir = tmp.path().join("run");
    assert!(run_dir.join("chain_0/draws.bin").exists());
    assert!(run_dir.join("chain_1/draws.bin").exists());
    assert!(run_dir.join("spec.json").exists());

    let out = fsvar().args(["diagnose", "--run"]).arg(&run_dir).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("2 chains"), "{text}");
    assert!(text.contains("PSR"), "{text}");
    // Two seeds of the same process must agree: worst loading PSR < 1.1.
    let csv = std::fs::read_to_string(run_dir.join("diagnose.csv")).unwrap();
    let psr: f64 = csv
        .lines()
        .find(|l| l.starts_with("worst_loading_psr"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(psr < 1.1, "worst loading PSR {psr}");
}

#[test]
fn inputs_never_mutated() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = sim_config(tmp.path(), 120, 8);
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let dataset_before = std::fs::read(tmp.path().join("data/dataset.csv")).unwrap();
    let schema_before = std::fs::read(tmp.path().join("data/schema.json")).unwrap();
    let run = run_config(tmp.path(), 80, 20, 8);
    assert!(fsvar().args(["estimate", "--config"]).arg(&run).status().unwrap().success());
    assert_eq!(dataset_before, std::fs::read(tmp.path().join("data/dataset.csv")).unwrap());
    assert_eq!(schema_before, std::fs::read(tmp.path().join("data/schema.json")).unwrap());
}

#[test]
fn nine_variable_six_lag_smoke() {
    // Small-system shape: 9 variables, p = 6, volatility and fat tails on,
    // 2,000 draws; must complete and write diagnostics.
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim.json");
    write(
        &sim,
        r#"{
            "output_dir": "data",
            "t_len": 360,
            "m": 2, "n_core": 7, "n_other": 0,
            "factors": 4, "lags": 2, "seed": 12
        }"#,
    );
    assert!(fsvar().args(["simulate", "--config"]).arg(&sim).status().unwrap().success());
    let run = tmp.path().join("run.json");
    write(
        &run,
        r#"{
            "data": "data/dataset.csv",
            "schema": "data/schema.json",
            "scheme": "data/scheme.json",
            "output_dir": "run",
            "lags": 6, "factors": 4,
            "features": {"tv_loadings": false, "stoch_vol": true, "student_t": true},
            "draws": 2000, "burn": 200, "thin": 10, "seed": 12
        }"#,
    );
    let status = fsvar()
        .args(["estimate", "--config"])
        .arg(&run)
        .args(["--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let diag = std::fs::read_to_string(tmp.path().join("run/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 200);
}
