use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn dcm(out: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_dcm"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn dcm")
        .status
        .code()
        .expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let output = Command::new(env!("CARGO_BIN_EXE_dcm"))
        .args(["--config", missing.to_str().unwrap(), "weights"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("absent.json"));
}

#[test]
fn unknown_flag_and_unknown_field_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dcm(dir.path(), &["--no-such-flag", "weights"]), 2);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(dcm(dir.path(), &["--config", cfg.to_str().unwrap(), "weights"]), 2);
    assert_eq!(dcm(dir.path(), &["fbi", "--fixture", "no-such-fixture"]), 2);
}

#[test]
fn empty_scan_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    fs::write(&cfg, r#"{"n_directions": 0}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(dcm(&out, &["--config", cfg.to_str().unwrap(), "fbi", "--fixture", "conormal"]), 1);
    assert!(!out.join("fbi.csv").exists());
}

#[test]
fn conormal_wf_experiment_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dcm(dir.path(), &["wf-experiment", "--fixture", "conormal"]), 0);
    let report = read_json(&dir.path().join("wf-experiment.json"));
    assert_eq!(report["command"], "wf-experiment");
    assert_eq!(report["results"]["pass"], true);
    assert_eq!(report["config"]["fixture"], "conormal");
    let csv = fs::read_to_string(dir.path().join("wf-experiment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn fbi_csv_is_sorted_by_direction_then_lambda() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dcm(dir.path(), &["fbi", "--fixture", "sign"]), 0);
    let csv = fs::read_to_string(dir.path().join("fbi.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("direction_index,omega0,lambda,abs_F,envelope,passed"));
    let keys: Vec<(usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(keys.len(), 26);
    assert!(keys.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)));
    let report = read_json(&dir.path().join("fbi.json"));
    assert_eq!(report["results"]["singular"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        for args in [&["weights"][..], &["jets"], &["fbi", "--fixture", "gaussian-cut"], &["acceptance", "--criterion", "2"]] {
            let mut full = vec!["--threads", threads, "--seed", "7"];
            full.extend_from_slice(args);
            assert_eq!(dcm(dir.path(), &full), 0, "{args:?}");
        }
    }
    for name in ["weights", "jets", "fbi", "acceptance"] {
        for ext in ["csv", "json"] {
            let file = format!("{name}.{ext}");
            assert_eq!(fs::read(a.path().join(&file)).unwrap(), fs::read(b.path().join(&file)).unwrap(), "{file}");
        }
    }
}

#[test]
fn binary_input_round_trips_through_fbi() {
    let dir = tempfile::tempdir().unwrap();
    let u = dc_microlocal::fbi::fixture("sign").unwrap();
    let input = dir.path().join("sign.bin");
    u.write_binary(fs::File::create(&input).unwrap()).unwrap();
    assert_eq!(dcm(dir.path(), &["fbi", "--input", input.to_str().unwrap()]), 0);
    let report = read_json(&dir.path().join("fbi.json"));
    assert_eq!(report["results"]["singular"].as_array().unwrap().len(), 2);
}
