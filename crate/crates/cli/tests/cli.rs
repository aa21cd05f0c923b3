use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spw-faultlab"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn secded_encode_decode() {
    let o = run(&["secded", "encode", "0xffff"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0x3ffffc");

    let o = run(&["secded", "decode", "3ffffc"]);
    assert_eq!(stdout(&o).trim(), "data 0xffff no_fault");
    // flip data position 3 (bit 3)
    let o = run(&["secded", "decode", "0x3ffff4"]);
    assert_eq!(stdout(&o).trim(), "data 0xffff single_corrected position=3");
    let o = run(&["secded", "decode", "0x3ffffd"]);
    assert_eq!(stdout(&o).trim(), "data 0xffff overall_parity_fault");
    let o = run(&["secded", "decode", "0x3ffff0"]);
    assert!(stdout(&o).contains("double_detected"));

    assert!(!run(&["secded", "encode", "0x10000"]).status.success());
    assert!(!run(&["secded", "decode", "0x400000"]).status.success());
    assert!(!run(&["secded", "decode", "zz"]).status.success());
}

#[test]
fn validate_model_accepts_fixture_and_rejects_corruption() {
    let model = fixtures().join("model.spww");
    let o = run(&["validate-model", model.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("80680 weights + 238 biases"));

    let dir = tempfile::tempdir().unwrap();
    let mut bytes = fs::read(&model).unwrap();
    bytes[500] ^= 1;
    let bad = dir.path().join("bad.spww");
    fs::write(&bad, bytes).unwrap();
    let o = run(&["validate-model", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("CRC"));
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let f = fixtures();
    let text = format!(
        r#"{{"model": "{}", "dataset": "{}", "output_dir": "out", {body}}}"#,
        f.join("model.spww").display(),
        f.join("manifest.json").display()
    );
    let path = dir.join("spec.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_summarize_compare() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#""seed": 3, "grid": {"p": [0.1, 0.0], "protection": ["ecc", "spw"], "target": ["all"],
            "limit": [2], "iterations": 3, "images": 60}"#,
    );
    let o = run(&["run", "--spec", spec.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert!(out.join("summary.csv").exists());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("overhead 37.5%"));

    let cells: Vec<_> = fs::read_dir(out.join("cells")).unwrap().collect();
    assert_eq!(cells.len(), 8);
    let csv = fs::read_to_string(out.join("cells/000_ecc_all_p1e-1_l2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,accuracy,accepted_flag,flips_injected,singles_corrected,doubles_masked_or_passed"
    );
    assert_eq!(lines.count(), 3);

    let o = run(&["summarize", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("Median accuracy, ecc") && s.contains("Median accuracy, spw"));
    assert!(s.contains("Convolution"));

    let o = run(&["summarize", out.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);

    let o = run(&["compare", out.to_str().unwrap(), "--baseline", "ecc", "--candidate", "spw"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 3, "{s}");
    // p = 0: no faults, both modes at fault-free accuracy
    assert!(s.lines().any(|l| l.contains(" 0 ") && l.trim_end().ends_with("1.000")), "{s}");

    let o = run(&["compare", out.to_str().unwrap(), "--baseline", "none", "--candidate", "spw"]);
    assert!(!o.status.success());
}

#[test]
fn unknown_spec_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#""cells": [{"p": 0.1, "protection": "spw", "bogus": 1}]"#);
    let o = run(&["run", "--spec", spec.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
