use std::path::Path;
use std::process::{Command, Output};

use miura_lab::grid::{Field, Grid};
use serde_json::Value;

fn miura_lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miura-lab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MIURA_LAB_THREADS")
        .output()
        .expect("spawn miura-lab")
}

fn report(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join("runs").join(name).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn quadform_reports_lieb_thirring_integral() {
    let tmp = tempfile::tempdir().unwrap();
    let out = miura_lab(&["quadform"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    let integral = stdout["lieb_thirring"]["integral"].as_f64().unwrap();
    assert!((integral - 1.771875).abs() < 1e-12);
    assert_eq!(report(tmp.path(), "quadform"), stdout);
    for file in ["config.json", "diagnostics.csv", "report.json"] {
        assert!(tmp.path().join("runs/quadform").join(file).is_file(), "{file}");
    }
}

#[test]
fn invert_serialized_soliton_on_star_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let g = Grid::new(30.0, 512).unwrap();
    // R_4(x) = -2 sech^2(x).
    let r4 = Field::from_fn(g, |x| -2.0 / x.cosh().powi(2));
    let path = tmp.path().join("r4.json");
    r4.save_json(&path).unwrap();
    let out = miura_lab(
        &["invert", "--branch", "f-star", "--field", path.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path(), "invert");
    assert!((r["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{r}");
    assert!(r["rho"].is_null());
    assert!(r["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn missing_field_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = miura_lab(&["simulate", "--field", "does_not_exist.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does_not_exist.json"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), r#"{"grid": {"L": 20, "M": 3}}"#).unwrap();
    let out = miura_lab(&["simulate", "--config", "c.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_command_and_bad_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(miura_lab(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(miura_lab(&[], tmp.path()).status.code(), Some(1));
    assert_eq!(miura_lab(&["--help"], tmp.path()).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_miura-lab"))
        .arg("quadform")
        .current_dir(tmp.path())
        .env("MIURA_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kink_runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("short.json"),
        r#"{"name": "short", "stepping": {"t_end": 0.4, "diagnostic_stride": 20, "snapshot_stride": 100}}"#,
    )
    .unwrap();
    let mut tables = Vec::new();
    for seed in ["7", "7"] {
        let out = miura_lab(
            &["kink-stability", "--config", "short.json", "--seed", seed, "--format", "csv"],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let file = std::fs::read(tmp.path().join("runs/short/diagnostics.csv")).unwrap();
        assert_eq!(file, out.stdout);
        tables.push(file);
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.pop().unwrap()).unwrap();
    assert!(text.lines().count() > 2);
    assert!(tmp.path().join("runs/short/snaps/snap_0.json").is_file());
}
