//! End-to-end binary behavior: subcommands, exit codes, and diagnostics.

use std::path::PathBuf;
use std::process::{Command, Output};

const GOOD: &str = r#"
seed = 21

[experiment]
kind = "kl_vs_n"

[model]
id = "two-state"
initial = [0.6, 0.4]
horizon = 2
transition = [[0.7, 0.3], [0.2, 0.8]]
potentials = [[2.0, 1.0], [1.0, 3.0]]

[smc]
algorithm = "sir"
n_list = [1, 2, 3]
"#;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feynkac"))
}

fn write_config(dir: &tempfile::TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, GOOD);
    let out = dir.path().join("report.csv");
    let output = binary()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("experiment,model_id,"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn output_path_can_come_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config.csv");
    let text = format!("output = {:?}\n{GOOD}", out.to_string_lossy());
    let config = write_config(&dir, &text);
    let output = binary()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(out.exists());
}

#[test]
fn missing_output_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, GOOD);
    let output = binary()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("output"));
}

#[test]
fn validate_accepts_and_names_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, GOOD);
    let output = binary()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("kl_vs_n"));
    assert!(stdout.contains("two-state"));
}

#[test]
fn unknown_keys_fail_validation_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, &format!("{GOOD}\nmystery = 3\n"));
    let output = binary()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("mystery"), "{}", stderr(&output));
}

#[test]
fn missing_config_file_exits_one() {
    let output = binary()
        .args(["validate", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn degenerate_models_fail_at_runtime_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = GOOD.replace("[[2.0, 1.0], [1.0, 3.0]]", "[[0.0, 0.0], [1.0, 3.0]]");
    let config = write_config(&dir, &text);

    let validate = binary()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(validate.status.success(), "shape-valid config must parse");

    let out = dir.path().join("report.csv");
    let run = binary()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
}

#[test]
fn list_experiments_prints_the_seven_kinds() {
    let output = binary().arg("list-experiments").output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    let kinds: Vec<&str> = stdout.lines().collect();
    assert_eq!(
        kinds,
        vec![
            "kl_vs_n",
            "bound_check",
            "ess_suite",
            "normalizer_check",
            "icsmc_minorization",
            "tv_decay",
            "pg_ergodicity",
        ]
    );
}
