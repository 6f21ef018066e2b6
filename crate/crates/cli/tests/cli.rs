//! End-to-end checks of the command-line surface: exit codes, frozen
//! outputs, config handling, and byte-level determinism of reports.

use std::io::Write;
use std::process::{Command, Output};

fn tslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tslab"))
        .args(args)
        .env_remove("TSLAB_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn norm_of_short_ones_block() {
    let out = tslab(&["norm", "--space", "tsirelson", "--vec", "2:1,3:1,4:1,5:1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("norm = 3/2"), "got: {}", stdout(&out));

    let out = tslab(&["norm", "--space", "tsirelson_modified", "--vec", "2:1,3:1,4:1,5:1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("norm = 3/2"), "got: {}", stdout(&out));
}

#[test]
fn families_members_list_starts_with_the_empty_set() {
    let out = tslab(&["families", "S(1)", "--window", "1..3"]);
    assert!(out.status.success());
    let body = stdout(&out);
    let sets: Vec<&str> = body.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(sets, vec!["{}", "{1}", "{2}", "{2,3}", "{3}"], "got: {body}");
}

#[test]
fn families_maximal_members_in_a_narrow_window() {
    let out = tslab(&["families", "S(1)", "--window", "2..4", "--what", "maximal"]);
    assert!(out.status.success());
    let body = stdout(&out);
    let sets: Vec<&str> = body.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(sets, vec!["{2,3}", "{2,4}", "{3,4}"], "got: {body}");
}

#[test]
fn spaces_list_names_the_presets() {
    let out = tslab(&["spaces", "list"]);
    assert!(out.status.success());
    let body = stdout(&out);
    assert!(body.contains("tsirelson_modified"));
    assert!(body.contains("mixed_fn"));
}

#[test]
fn bad_vector_is_a_usage_error() {
    let out = tslab(&["norm", "--space", "tsirelson", "--vec", "0:1"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    let out = tslab(&["norm", "--space", "tsirelson", "--vec", "not-a-vector"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    let out = tslab(&["norm", "--space", "tsirelson"]);
    assert_eq!(out.status.code(), Some(3));
    let out = tslab(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_cleanly() {
    let out = tslab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let out = tslab(&["verify", "--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn tiny_budget_is_a_resource_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_tslab"))
        .args(["norm", "--space", "tsirelson", "--vec", "2:1,3:1,4:1,5:1"])
        .env("TSLAB_BUDGET", "10")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("resource limit"));
}

#[test]
fn malformed_budget_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_tslab"))
        .args(["norm", "--space", "tsirelson", "--vec", "2:1"])
        .env("TSLAB_BUDGET", "plenty")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn budget_flag_overrides_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_tslab"))
        .args(["norm", "--space", "tsirelson", "--vec", "2:1,3:1,4:1,5:1", "--budget", "100000"])
        .env("TSLAB_BUDGET", "10")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
}

#[test]
fn config_file_matches_its_preset() {
    let mut cfg = tempfile::NamedTempFile::new().expect("temp file");
    writeln!(cfg, "name = two-level").unwrap();
    writeln!(cfg, "variant = plain").unwrap();
    writeln!(cfg, "level = S(1) : 1/2").unwrap();
    cfg.flush().unwrap();
    let path = cfg.path().to_str().unwrap();

    let from_config = tslab(&["norm", "--config", path, "--vec", "2:1,3:1,4:1,5:1"]);
    assert!(from_config.status.success(), "stderr: {}", stderr(&from_config));
    assert!(stdout(&from_config).contains("norm = 3/2"));
}

#[test]
fn space_and_config_together_are_rejected() {
    let mut cfg = tempfile::NamedTempFile::new().expect("temp file");
    writeln!(cfg, "level = S(1) : 1/2").unwrap();
    cfg.flush().unwrap();
    let out = tslab(&[
        "norm",
        "--space",
        "tsirelson",
        "--config",
        cfg.path().to_str().unwrap(),
        "--vec",
        "2:1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn witness_roundtrip_through_files() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("witness.json");

    let made = tslab(&["scc", "make", "--kind", "basic", "--eps", "1/2", "--stream", "evens"]);
    assert!(made.status.success());
    std::fs::write(&path, made.stdout).unwrap();

    let checked = tslab(&["scc", "check", "--witness", path.to_str().unwrap()]);
    assert_eq!(checked.status.code(), Some(0), "stderr: {}", stderr(&checked));

    // Tampering with a coefficient makes the same witness fail.
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("1/3", "1/4", 1);
    assert_ne!(text, tampered, "the witness should carry a 1/3 coefficient");
    std::fs::write(&path, tampered).unwrap();
    let checked = tslab(&["scc", "check", "--witness", path.to_str().unwrap()]);
    assert_eq!(checked.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let args = ["verify", "schreier", "--ground", "6", "--json", "--seed", "7"];
    let a = tslab(&args);
    let b = tslab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn distortion_gap_is_exactly_one_when_both_levels_agree() {
    let out = tslab(&["distort", "--i0", "1", "--j", "1", "--trials", "2", "--json"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).expect("valid JSON");
    let cases = report["cases"].as_array().expect("cases array");
    let trials: Vec<&serde_json::Value> =
        cases.iter().filter(|c| c["id"].as_str().unwrap().starts_with("trial")).collect();
    assert_eq!(trials.len(), 2);
    for t in trials {
        assert_eq!(t["values"]["gap"]["exact"].as_str(), Some("1"));
    }
}

#[test]
fn distortion_of_the_zero_vector_is_rejected() {
    let out = tslab(&["distort", "--i0", "1", "--j", "2", "--vec", "5:0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_rejects_a_space_that_breaks_the_suite_hypothesis() {
    // The disjoint lower bound needs modified splitting at the first level,
    // which the plain preset does not have.
    let out = tslab(&["verify", "theta1_lower", "--space", "tsirelson", "--count", "1"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}
