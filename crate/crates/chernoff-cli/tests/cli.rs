//! End-to-end CLI contracts: validation errors with field paths, emitted
//! file sets, and byte-identical reruns of every shipped experiment config
//! at different worker caps.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_chernoff")
}

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary launches")
}

/// Deterministic outputs of a run directory: everything except the
/// wall-clock timings file.
fn deterministic_files(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name != "timings.json")
        .collect()
}

#[test]
fn list_experiments_names_all_kinds() {
    let out = run(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "fd-hjb",
        "euler",
        "tilt",
        "control",
        "wasserstein",
        "resolvent",
        "yosida",
        "compare",
        "properties",
    ] {
        assert!(text.lines().any(|l| l == kind), "missing {kind}");
    }
}

#[test]
fn validate_reports_cfl_violation_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad_cfl.toml");
    fs::write(
        &path,
        r#"
version = 1
experiment = "fd-hjb"

[grid]
lo = -2.0
hi = 2.0

[time]
t = 0.1

[window]
lo = -1.0
hi = 1.0

[initial]
kind = "gaussian-bump"
center = 0.0
width = 1.0
height = 1.0

[scheme]
kind = "fd-hjb"
deltas = [0.1]
hs = [0.01]
sigma_max = 2.0
sigma_grid_sizes = [9]
penalty = { kind = "indicator", lo = 0.0, hi = 2.0 }

[oracle]
kind = "gaussian-heat"
sigma = 1.0

[tolerances]
final_error = 1.0
"#,
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("scheme.sigma_max"),
        "expected the failing field path, got: {err}"
    );
    assert!(err.contains("CFL"), "expected the CFL diagnosis, got: {err}");
}

#[test]
fn validate_requires_seed_for_properties() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_seed.toml");
    fs::write(
        &path,
        r#"
version = 1
experiment = "properties"

[grid]
lo = -2.0
hi = 2.0

[window]
lo = -1.0
hi = 1.0

[properties]
trials = 10

[[properties.schemes]]
kind = "resolvent"
deltas = [0.04]
lambdas = [100.0]
thetas = [1.0]

[tolerances]
max_violations = 0
"#,
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("seed"), "got: {err}");
}

#[test]
fn level_filter_runs_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = workspace_root().join("configs/c1_linear_heat.toml");
    let out = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--level-filter",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = deterministic_files(&out_dir);
    assert!(files.contains("summary.json"));
    assert!(files.contains("errors.csv"));
    assert!(files.contains("function_2.csv"));
    assert!(!files.contains("function_0.csv"));
    let errors = fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 2, "header plus one level row");
}

#[test]
fn snapshot_file_count_matches_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = workspace_root().join("configs/c1_linear_heat.toml");
    let out = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let files = deterministic_files(&out_dir);
    let expected: BTreeSet<String> = [
        "summary.json",
        "errors.csv",
        "function_0.csv",
        "function_1.csv",
        "function_2.csv",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    assert_eq!(files, expected);
}

#[test]
fn properties_run_emits_summary_only() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = workspace_root().join("configs/c6_properties.toml");
    let out = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = deterministic_files(&out_dir);
    let expected: BTreeSet<String> = ["summary.json"].into_iter().map(String::from).collect();
    assert_eq!(files, expected, "empty-ladder runs emit the summary alone");
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"zero_violations\": true"));
}

/// Reruns of every shipped experiment config produce byte-identical report
/// files at different `--threads` values.
#[test]
fn criterion_9_reruns_are_byte_identical() {
    let configs_dir = workspace_root().join("configs");
    let mut configs: Vec<PathBuf> = fs::read_dir(&configs_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    configs.sort();
    assert!(configs.len() >= 16, "shipped configs present");

    let mut all_ok = true;
    for config in &configs {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first");
        let second = dir.path().join("second");
        for (out_dir, threads) in [(&first, "1"), (&second, "3")] {
            let out = run(&[
                "run",
                config.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--threads",
                threads,
            ]);
            assert!(
                out.status.success(),
                "{} failed: {}",
                config.display(),
                String::from_utf8_lossy(&out.stderr)
            );
        }
        let files_a = deterministic_files(&first);
        let files_b = deterministic_files(&second);
        assert_eq!(files_a, files_b, "{}", config.display());
        let mut identical = true;
        for name in &files_a {
            let a = fs::read(first.join(name)).unwrap();
            let b = fs::read(second.join(name)).unwrap();
            identical &= a == b;
        }
        println!(
            "[criterion 9] {}: {}",
            config.file_name().unwrap().to_string_lossy(),
            if identical { "byte-identical" } else { "MISMATCH" }
        );
        all_ok &= identical;
    }
    assert!(all_ok, "criterion 9 failed: some rerun differed");
}
