use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

const S2_ALPHA: &str = r#"{"family":"suspension","params":{"link":{"kind":"circle","radius":0.5}}}"#;
const PI_CONE: &str = r#"{"family":"cone","params":{"link":{"kind":"circle","radius":0.5},"truncation_radius":1.0}}"#;

fn stratlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratlab"))
        .args(args)
        .env("STRATLAB_CACHE_DIR", std::env::temp_dir().join("stratlab-cli-tests"))
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn smoke_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/smoke.json").display().to_string()
}

#[test]
fn classify_suspension_is_rcd() {
    let v = json(&stratlab(&["classify", "--model", S2_ALPHA, "--K", "1", "--N", "2"]));
    assert_eq!(v["is_rcd"], true);
    assert_eq!(v["indeterminate"], false);
}

#[test]
fn classify_with_alexandrov() {
    let wide = r#"{"family":"cone","params":{"link":{"kind":"circle","radius":1.5},"truncation_radius":1.0}}"#;
    let v = json(&stratlab(&["classify", "--model", wide, "--K", "0", "--N", "2", "--alexandrov", "0"]));
    assert_eq!(v["rcd"]["is_rcd"], false);
    assert_eq!(v["alexandrov"]["is_rcd"], false);
}

#[test]
fn apex_volume_within_three_stderr() {
    let v = json(&stratlab(&["volume", "--model", PI_CONE, "--center", "apex", "--r", "0.5", "--seed", "4"]));
    let (value, se) = (v["value"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    let oracle = PI / 2.0 * 0.25;
    assert!((value - oracle).abs() <= 3.0 * se + 1e-12, "{value} vs {oracle}");
}

#[test]
fn distance_through_the_apex() {
    let v = json(&stratlab(&[
        "distance",
        "--model",
        PI_CONE,
        "--p",
        r#"{"radial":{"r":0.3,"angle":0.0}}"#,
        "--q",
        r#"{"radial":{"r":0.4,"angle":3.14159}}"#,
    ]));
    // cone gap ≈ π/2 < π: law of cosines with the halved angle
    let gap = 3.14159f64 / 2.0;
    let oracle = (0.09f64 + 0.16 - 0.24 * gap.cos()).sqrt();
    assert!((v["distance"].as_f64().unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn missing_seed_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, format!(r#"{{"model": {S2_ALPHA}, "classify": {{"K": 1, "N": 2}}}}"#)).unwrap();
    let out = stratlab(&["report", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn bad_model_exits_two() {
    let out = stratlab(&["classify", "--model", r#"{"family":"cone","params":{}}"#, "--K", "0", "--N", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = stratlab(&["volume", "--model", PI_CONE, "--center", "pole", "--r", "0.5", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_config_matches_expectations() {
    let out = stratlab(&["report", "--config", &smoke_config()]);
    let v = json(&out);
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 12);
    assert!(checks.iter().any(|c| c["expected_pass"] == false));
    assert!(checks.iter().all(|c| c["as_expected"] == true), "{v:#}");
    assert_eq!(v["verdicts"][0]["is_rcd"], false);
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = stratlab(&["report", "--config", &smoke_config(), "--format", "csv", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn catalog_lists_every_entry() {
    let v = json(&stratlab(&["catalog"]));
    assert_eq!(v["entries"].as_array().unwrap().len(), 13);
    let table = stratlab(&["catalog", "--table"]);
    assert!(String::from_utf8_lossy(&table.stdout).starts_with('|'));
}
