mod common;

use std::process::Command;

use common::fixture_path;

fn slicelens(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_slicelens")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn ingest_discover_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let data = data.to_str().unwrap();
    let input = fixture_path();
    let out = slicelens(&["ingest", "--input", input.to_str().unwrap(), "--out", data, "--tsne-iterations", "250"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = slicelens(&["discover", "--data", data, "--max-conditions", "2", "--min-support", "0.05", "--min-error-rate", "auto", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed = String::from_utf8(out.stdout).unwrap();
    let rules = slicelens::report::parse_rules_report(&printed).unwrap();
    assert!(!rules.is_empty());
    let cached = std::fs::read_to_string(dir.path().join("data/rules.txt")).unwrap();
    assert_eq!(cached, printed);

    let html = dir.path().join("report.html");
    let out = slicelens(&["report", "--data", data, "--format", "html", "--out", html.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(html).unwrap().contains("<h2>Rules"));

    let out = slicelens(&["report", "--data", data, "--top", "2"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains(&format!("Rules (2 of {})", rules.len())));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = slicelens(&["discover", "--data", dir.path().to_str().unwrap(), "--min-error-rate", "lots"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--min-error-rate"));

    let out = slicelens(&["report", "--data", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}
