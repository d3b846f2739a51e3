//! End-to-end tests of the `shardsim` binary: exit codes, report schema,
//! determinism of each subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn shardsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shardsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

const SMALL_CSV: &str = "\
tx_hash,block_hash,source,destination,start_time,amount,fee
0x1,0xb,A,B,1,1,0.1
0x2,0xb,B,C,2,1,0.15
0x3,0xb,B,C,3,1,0.3
";

#[test]
fn oracle_prints_optimal_makespan() {
    let dir = TempDir::new().unwrap();
    write(
        &dir,
        "costs.json",
        r#"{"a": "5", "b": "4", "c": "3", "d": "3", "e": "3"}"#,
    );
    let out = shardsim(
        &["oracle", "--input", "costs.json", "--shards", "2", "--scale", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "9");
}

#[test]
fn oracle_rejects_oversized_instances() {
    let dir = TempDir::new().unwrap();
    let costs: String = format!(
        "{{{}}}",
        (0..12)
            .map(|i| format!("\"a{i}\": \"1\""))
            .collect::<Vec<_>>()
            .join(", ")
    );
    write(&dir, "costs.json", &costs);
    let out = shardsim(
        &["oracle", "--input", "costs.json", "--shards", "10", "--scale", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "guard violation is a data error");
}

#[test]
fn ingest_reports_kept_and_removed() {
    let dir = TempDir::new().unwrap();
    write(&dir, "txs.csv", SMALL_CSV);
    let out = shardsim(
        &[
            "ingest",
            "--input",
            "txs.csv",
            "--outlier-threshold",
            "0.2",
            "--out",
            "summary.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("2 kept"), "stdout: {text}");
    assert!(text.contains("1 removed"), "stdout: {text}");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["transactions_total"], 3);
    assert_eq!(summary["transactions_kept"], 2);
    assert_eq!(summary["transactions_removed"], 1);
    assert_eq!(summary["accounts"], 2);
    assert_eq!(summary["total_cost"], "0.25");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = shardsim(&["simulate", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = shardsim(
        &["simulate", "--input", "nope.csv", "--out", "r.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = shardsim(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn simulate_with_algorithm_none_repeats_epochs() {
    let dir = TempDir::new().unwrap();
    write(&dir, "txs.csv", SMALL_CSV);
    let out = shardsim(
        &[
            "simulate",
            "--input",
            "txs.csv",
            "--out",
            "report.json",
            "--algo",
            "none",
            "--shards",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let epochs = report["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 2);
    let mut first = epochs[0].clone();
    let mut second = epochs[1].clone();
    // Same measurements; only the labels and telemetry wrapper differ.
    first["epoch"] = 0.into();
    second["epoch"] = 0.into();
    second.as_object_mut().unwrap().remove("rebalance");
    assert_eq!(first, second);
}

fn schema_validator() -> jsonschema::Validator {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json");
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn reports_validate_against_shipped_schema() {
    let dir = TempDir::new().unwrap();
    write(&dir, "txs.csv", SMALL_CSV);
    let validator = schema_validator();
    for algo in ["diffusion", "lpt", "multifit", "none"] {
        let out = shardsim(
            &[
                "simulate",
                "--input",
                "txs.csv",
                "--out",
                "report.json",
                "--algo",
                algo,
                "--shards",
                "3",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "algo {algo}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        let errors: Vec<String> = validator
            .iter_errors(&report)
            .map(|e| format!("{}: {e}", e.instance_path()))
            .collect();
        assert!(errors.is_empty(), "algo {algo}: {errors:?}");
    }
}

#[test]
fn strict_mode_flags_non_convergence() {
    let dir = TempDir::new().unwrap();
    let gen = shardsim(
        &[
            "gen-fixture",
            "--accounts",
            "60",
            "--seed",
            "1",
            "--skew",
            "pointmass",
            "--scale",
            "0",
            "--out",
            "txs.csv",
        ],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0));
    write(
        &dir,
        "config.json",
        r#"{"shard_count": 5, "decimal_scale": 0, "diffusion_tol": 0.001, "diffusion_max_iters": 2}"#,
    );
    let out = shardsim(
        &[
            "simulate",
            "--config",
            "config.json",
            "--input",
            "txs.csv",
            "--out",
            "report.json",
            "--strict",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn trace_dir_receives_diffusion_and_migration_csvs() {
    let dir = TempDir::new().unwrap();
    let gen = shardsim(
        &[
            "gen-fixture",
            "--accounts",
            "60",
            "--seed",
            "5",
            "--skew",
            "pointmass",
            "--scale",
            "0",
            "--out",
            "txs.csv",
        ],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0));
    write(&dir, "config.json", r#"{"shard_count": 5, "decimal_scale": 0}"#);
    let out = shardsim(
        &[
            "simulate",
            "--config",
            "config.json",
            "--input",
            "txs.csv",
            "--out",
            "report.json",
            "--trace-dir",
            "traces",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let diffusion = std::fs::read_to_string(dir.path().join("traces/diffusion_epoch1.csv")).unwrap();
    assert!(diffusion.starts_with("iter,load_0,load_1,load_2,load_3,load_4,spread"));
    assert!(diffusion.lines().count() > 1);
    let migration = std::fs::read_to_string(dir.path().join("traces/migration_epoch1.csv")).unwrap();
    assert!(migration.starts_with("round,account,from,to,cost"));
    assert!(migration.lines().count() > 1);
}

#[test]
fn gen_fixture_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = shardsim(
            &[
                "gen-fixture",
                "--accounts",
                "40",
                "--seed",
                "3",
                "--skew",
                "pareto",
                "--out",
                name,
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn balance_lpt_prints_makespan_and_writes_assignment() {
    let dir = TempDir::new().unwrap();
    write(
        &dir,
        "costs.json",
        r#"{"a": "5", "b": "4", "c": "3", "d": "3", "e": "3"}"#,
    );
    let out = shardsim(
        &[
            "balance",
            "--algo",
            "lpt",
            "--costs",
            "costs.json",
            "--shards",
            "2",
            "--scale",
            "0",
            "--out",
            "asg.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("lpt makespan: 10"));
    let asg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("asg.json")).unwrap())
            .unwrap();
    assert_eq!(asg.as_object().unwrap().len(), 5);
}
