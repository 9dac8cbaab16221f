mod common;

use std::process::Command;

use common::manifest_dir;
use retroviz::harness::{bundled_suite, run_experiment, ExperimentSpec, SuiteSpec, SuiteTable};
use retroviz::RngSeed;

#[test]
fn shipped_suite_file_matches_the_builtin_grid() {
    let path = manifest_dir().join("../../configs/bundled_suite.toml");
    let parsed = SuiteSpec::from_toml_file(&path).unwrap();
    assert_eq!(parsed, bundled_suite());
    assert_eq!(parsed.expand().len(), 24);
}

#[test]
fn experiment_from_a_config_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let ds = retroviz::harness::generate_synthetic("clusters2", 400, RngSeed(4)).unwrap();
    ds.write_csv(&dir.path().join("clusters.csv")).unwrap();
    let config = dir.path().join("natural.toml");
    std::fs::write(
        &config,
        r#"
name = "regime change"
dataset = { source = "clusters.csv", target = "y" }
error_cause = "shift_natural"
model = "lr"
output_dir = "out"

[split]
mode = "by_column_value"
column = "regime"
value = 0.0
"#,
    )
    .unwrap();
    let spec = ExperimentSpec::from_toml_file(&config).unwrap();
    let result = run_experiment(&spec).unwrap();
    let s = &result.summary;
    assert_eq!(s.n_train + s.n_test, 400);
    assert_eq!(result.per_instance.len(), s.n_test);
    assert!(s.pearson_rho < 0.0, "rho {}", s.pearson_rho);
    assert!(s.test_mse > s.train_mse);

    let out = dir.path().join("out");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["error_cause"], "shift_natural");
    let per_instance = std::fs::read_to_string(out.join("per_instance.csv")).unwrap();
    assert_eq!(per_instance.lines().count(), s.n_test + 1);
}

#[test]
fn small_suite_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        r#"
seed = 5
datasets = [{ source = "linear8", n_rows = 300 }, { source = "friedman1", n_rows = 300 }]
settings = [
  { model = "lr", error_cause = "shift_injected" },
  { model = "dt-unbounded", error_cause = "overfit" },
]
[split]
mode = "random_fraction"
seed = 5
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("tables");
    let out = Command::new(env!("CARGO_BIN_EXE_retroviz"))
        .args(["suite", "--spec", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("lr/shift_injected"));

    let table = SuiteTable::from_csv(&std::fs::read_to_string(out_dir.join("table.csv")).unwrap()).unwrap();
    assert_eq!(table.datasets, ["linear8", "friedman1"]);
    assert_eq!(table.settings, ["lr/shift_injected", "dt-unbounded/overfit"]);
    assert_eq!(table.all_values().len(), 4);
    assert_eq!(std::fs::read_to_string(out_dir.join("table.txt")).unwrap(), stdout);
}
