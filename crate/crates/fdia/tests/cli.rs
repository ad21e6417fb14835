use std::path::Path;
use std::process::{Command, Output};

use fdia::manifest::{RunManifest, MANIFEST_FILE};

const SCALAR: &str = "scenario = \"scalar-lti\"\n[detector]\ntraces = 400\n";

fn fdia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdia")).args(args).output().unwrap()
}

fn run_in(dir: &Path, command: &str, scenario: &str, out: &str) -> Output {
    let config = dir.join("scenario.toml");
    std::fs::write(&config, scenario).unwrap();
    let out = dir.join(out);
    fdia(&[command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn every_command_writes_its_outputs_and_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let expected: [(&str, &[&str]); 5] = [
        ("simulate", &["traces/nominal_0000.csv", "report.json"]),
        ("attack", &["traces/attack_0000.csv", "report.json"]),
        ("analyze", &["traces/attack_0000.csv", "roc.csv", "report.json"]),
        ("detect", &["roc.csv", "report.json"]),
        ("sweep", &["sweep.csv", "report.json"]),
    ];
    for (command, files) in expected {
        let o = run_in(dir.path(), command, SCALAR, command);
        assert!(o.status.success(), "{command}: {}", stderr(&o));
        let root = dir.path().join(command);
        for f in files.iter().chain(&[MANIFEST_FILE]) {
            assert!(root.join(f).is_file(), "{command} did not write {f}");
        }
        let manifest = RunManifest::read(&root).unwrap();
        assert_eq!(manifest.seed, 3);
        assert!(manifest.mismatches(&root).unwrap().is_empty(), "{command}");
    }
}

#[test]
fn tampering_with_an_output_is_caught_by_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), "sweep", SCALAR, "run").status.success());
    let root = dir.path().join("run");
    std::fs::write(root.join("sweep.csv"), "tampered\n").unwrap();
    let bad = RunManifest::read(&root).unwrap().mismatches(&root).unwrap();
    assert_eq!(bad, vec!["sweep.csv".to_string()]);
}

#[test]
fn detect_with_a_null_attack_reports_an_error_sum_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = format!("{SCALAR}[attack]\ns0_norm = 0.0\n");
    let o = run_in(dir.path(), "detect", &scenario, "run");
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run/report.json")).unwrap()).unwrap();
    for key in ["coin", "likelihood_ratio"] {
        let pe = report[key]["error_sum"].as_f64().unwrap();
        assert!(pe > 0.85, "{key} error sum {pe}");
    }
    assert_eq!(report["likelihood_ratio"]["error_sum"].as_f64(), Some(1.0));
}

#[test]
fn null_attack_is_rejected_outside_detect() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "attack", "scenario = \"scalar-lti\"\n[attack]\ns0_norm = 0.0\n", "run");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn alpha_inside_the_safe_region_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "attack", "scenario = \"scalar-lti\"\nalpha = 0.5\nsafe_radius = 1.0\n", "run");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "simulate", "scenario = \"scalar-lti\"\n[attack]\nsize = 3\n", "run");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("attack.size"), "{}", stderr(&o));
}

#[test]
fn too_few_calibration_traces_fail_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "detect", "scenario = \"scalar-lti\"\n[detector]\ntraces = 50\n", "run");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("detector.traces"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(fdia(&["simulate"]).status.code(), Some(1));
    assert_eq!(fdia(&["launch"]).status.code(), Some(1));
    assert_eq!(fdia(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = run_in(dir.path(), "simulate", SCALAR, "file/run");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[io]"), "{}", stderr(&o));
}

#[test]
fn seed_override_is_recorded_with_its_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), "simulate", SCALAR, "run").status.success());
    let text = std::fs::read_to_string(dir.path().join("run").join(MANIFEST_FILE)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["provenance"]["seed"], "command-line");
    assert_eq!(json["provenance"]["detector.traces"], "file");
    assert_eq!(json["provenance"]["horizon"], "default");
}
