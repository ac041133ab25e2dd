// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn coinlever(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coinlever"))
        .args(args)
        .current_dir(dir)
        .env_remove("COINLEVER_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_inputs(dir: &Path, utxos: &[u64], payments: &[u64]) {
    let mut u = String::from("id,value_sat\n");
    for (i, v) in utxos.iter().enumerate() {
        u.push_str(&format!("u{i},{v}\n"));
    }
    let mut p = String::from("id,value_sat\n");
    for (i, v) in payments.iter().enumerate() {
        p.push_str(&format!("p{i},{v}\n"));
    }
    fs::write(dir.join("utxos.csv"), u).unwrap();
    fs::write(dir.join("payments.csv"), p).unwrap();
}

const SMALL: [&str; 8] = ["--gamma", "1", "--beta", "1", "--budget-ms", "5000", "--node-limit", "100000"];

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&coinlever(&["--help"], dir.path())), 0);
    assert_eq!(code(&coinlever(&["--version"], dir.path())), 0);
    assert_eq!(code(&coinlever(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&coinlever(&["simulate"], dir.path())), 1);
    let out = coinlever(&["simulate", "--out", "r.json", "--beta", "1.5"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn select_prints_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &[50_000, 30_000, 20_000, 9_000], &[10_000, 12_000, 5_000]);
    let mut args = vec!["select", "--utxos", "utxos.csv", "--payments", "payments.csv", "--m", "2"];
    args.extend(SMALL);
    let out = coinlever(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["iteration"], 0);
    assert!(record["processed_ids"].as_array().unwrap().len() >= 2);
}

#[test]
fn run_full_writes_result() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &[50_000, 30_000, 20_000, 9_000, 7_000], &[10_000, 12_000, 5_000]);
    let mut args =
        vec!["run-full", "--utxos", "utxos.csv", "--payments", "payments.csv", "--m", "2", "--out", "run.json"];
    args.extend(SMALL);
    let out = coinlever(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(result["processed"], 3);
}

#[test]
fn exhausted_run_writes_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &[50_000, 1_000], &[10_000, 12_000, 40_000, 30_000]);
    let mut args =
        vec!["run-full", "--utxos", "utxos.csv", "--payments", "payments.csv", "--m", "2", "--out", "run.json"];
    args.extend(SMALL);
    let out = coinlever(&args, dir.path());
    assert_eq!(code(&out), 3);
    let partial: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(partial["processed"], 2);
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("utxos.csv"), "id,value_sat\nu0,0\n").unwrap();
    fs::write(dir.path().join("payments.csv"), "id,value_sat\np0,10\n").unwrap();
    let out = coinlever(&["select", "--utxos", "utxos.csv", "--payments", "payments.csv"], dir.path());
    assert_eq!(code(&out), 2);
    let out = coinlever(&["select", "--utxos", "missing.csv", "--payments", "payments.csv"], dir.path());
    assert_eq!(code(&out), 2);
    fs::write(dir.path().join("broken.json"), "{").unwrap();
    let out = coinlever(&["report", "--input", "broken.json", "--format", "md", "--out", "r.md"], dir.path());
    assert_eq!(code(&out), 2);
}

const DESK: [&str; 14] = [
    "--gamma",
    "200",
    "--m",
    "2",
    "--utxo-pool-size",
    "200",
    "--payment-pool-size",
    "40",
    "--repetitions",
    "2",
    "--node-limit",
    "100000",
    "--budget-ms",
    "60000",
];

#[test]
fn simulate_is_reproducible_and_converts() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let mut args = vec!["simulate", "--out", name, "--seed", "5"];
        args.extend(DESK);
        let out = coinlever(&args, dir.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["cells"][0]["no_leverage"]["config"]["rng_seed"], 5);
    assert_eq!(report["cells"][0]["no_leverage"]["config"]["beta"], "0.54");

    let out = coinlever(&["report", "--input", "a.json", "--format", "csv", "--out", "tables"], dir.path());
    assert_eq!(code(&out), 0);
    let savings = fs::read_to_string(dir.path().join("tables/savings.csv")).unwrap();
    assert!(savings.lines().nth(1).unwrap().starts_with("200,2,"));
    let out = coinlever(&["report", "--input", "a.json", "--format", "md", "--out", "tables.md"], dir.path());
    assert_eq!(code(&out), 0);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "r.json", "--repetitions", "1"];
    args.extend(&DESK[..8]);
    let out = Command::new(env!("CARGO_BIN_EXE_coinlever"))
        .args(&args)
        .current_dir(dir.path())
        .env("COINLEVER_SEED", "31")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["cells"][0]["leverage"]["config"]["rng_seed"], 31);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"gamma": 60, "m": 3, "utxo_pool_size": 150, "payment_pool_size": 30, "repetitions": 1, "node_limit": 50000}"#,
    )
    .unwrap();
    let out =
        coinlever(&["simulate", "--config", "cfg.json", "--m", "2", "--format", "md", "--out", "r.md"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let md = fs::read_to_string(dir.path().join("r.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| 60 | 2 |")).count(), 3);

    fs::write(dir.path().join("bad.json"), r#"{"gama": 60}"#).unwrap();
    let out = coinlever(&["simulate", "--config", "bad.json", "--out", "r.md"], dir.path());
    assert_eq!(code(&out), 1);
}
