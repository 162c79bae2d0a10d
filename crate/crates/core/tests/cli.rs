use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmc-explore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let end = text.rfind("\n}").map_or(text.len(), |n| n + 2);
    serde_json::from_str(&text[..end]).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn missing_env_exits_two() {
    let out = cli(&["optimize", "--horizon", "20", "--method", "exhaustive"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--env"));
    assert_eq!(cli(&[]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(
        cli(&["simulate", "--env", "example1", "--r", "3,1,7"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cli(&["simulate", "--env", "example1", "--policy", "clever"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cli(&["--reproduce", "example0"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("counts.json");
    std::fs::write(&bad, r#"{"states": 2, "controls": 2, "counts": []}"#).unwrap();
    let out = cli(&[
        "plan",
        "--env",
        "example4",
        "--model",
        bad.to_str().unwrap(),
        "--goal",
        "23",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_cmc-explore"))
        .args(["simulate", "--env", "example1", "--policy", "greedy"])
        .env("CMC_EXPLORE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_example_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "optimize",
        "--env",
        "example1",
        "--horizon",
        "20",
        "--method",
        "exhaustive",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["r"], serde_json::json!([1, 1, 7]));
    let saved: Value = serde_json::from_str(&read(dir.path(), "result.json")).unwrap();
    assert_eq!(saved, v);
    assert!(read(dir.path(), "trace.csv").starts_with("iteration,best_objective"));
}

#[test]
fn optimize_example_two_with_cem() {
    let v = json(&cli(&[
        "optimize",
        "--env",
        "example2",
        "--horizon",
        "40",
        "--method",
        "cem",
    ]));
    let r: Vec<u64> = v["r"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(&r[..6], &[1, 2, 3, 1, 2, 3]);
    assert!((v["objective_mean"].as_f64().unwrap() - 23.13684684378245).abs() < 1e-9);
}

#[test]
fn simulate_example_one() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&cli(&[
        "simulate",
        "--env",
        "example1",
        "--r",
        "1,1,7",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    let fm = v["final_missing_information"].as_f64().unwrap();
    assert!((0.09..=0.11).contains(&fm), "{fm}");
    let table = read(dir.path(), "trajectory.csv");
    assert_eq!(
        table.lines().next(),
        Some("policy,period,state,control,h_bits,missing_info_bits")
    );
    assert_eq!(table.lines().count(), 21);
    let curve = read(dir.path(), "curve.csv");
    assert!(curve.starts_with("period,parametric\n0,4\n"));
}

#[test]
fn simulate_example_five() {
    let v = json(&cli(&[
        "simulate",
        "--env",
        "example5",
        "--r",
        "10,14,2,3,127,221",
        "--horizon",
        "400",
    ]));
    let fm = v["final_missing_information"].as_f64().unwrap();
    assert!((fm - 39.2).abs() <= 2.0, "{fm}");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "simulate".to_string(),
            "--env".into(),
            "example6".into(),
            "--policy".into(),
            "random".into(),
            "--trajectories".into(),
            "1000".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            dir.to_str().unwrap().into(),
        ]
    };
    let first = Command::new(env!("CARGO_BIN_EXE_cmc-explore"))
        .args(args(a.path()))
        .output()
        .unwrap();
    let second = Command::new(env!("CARGO_BIN_EXE_cmc-explore"))
        .args(args(b.path()))
        .env("CMC_EXPLORE_THREADS", "1")
        .output()
        .unwrap();
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    for name in ["trajectory.csv", "curve.csv", "counts.json", "summary.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let other = cli(&[
        "simulate",
        "--env",
        "example6",
        "--policy",
        "random",
        "--trajectories",
        "1000",
        "--seed",
        "12",
    ]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn plan_from_learned_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    json(&cli(&[
        "simulate",
        "--env",
        "example4",
        "--r",
        "10,12,14,1,1,2,373",
        "--out",
        d,
    ]));
    let model = dir.path().join("counts.json");
    let out = cli(&[
        "plan",
        "--env",
        "example4",
        "--model",
        model.to_str().unwrap(),
        "--discount",
        "0.99",
        "--goal",
        "23",
    ]);
    let v = json(&out);
    let path: Vec<u64> = v["path"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect();
    assert_eq!(path.len(), 13);
    assert_eq!(path.last(), Some(&23));
    assert!(String::from_utf8_lossy(&out.stdout).contains("+---+"));
}

#[test]
fn plan_on_modified_maze() {
    let v = json(&cli(&[
        "plan",
        "--env",
        "example4-modified-maze",
        "--r",
        "10,12,14,1,1,2,373",
        "--goal",
        "23",
    ]));
    let path: Vec<u64> = v["path"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect();
    assert!(path.windows(3).any(|w| w == [20, 25, 24]), "{path:?}");
}

#[test]
fn compare_example_one() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&cli(&[
        "compare",
        "--env",
        "example1",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    let final_of = |label: &str| {
        v["policies"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["policy"] == label)
            .unwrap()["final_missing_information"]
            .as_f64()
            .unwrap()
    };
    assert!(final_of("parametric") < final_of("greedy"));
    let curves = read(dir.path(), "curves.csv");
    assert!(curves.starts_with("period,parametric,greedy,random,rollout-greedy\n"));
    let last: Vec<f64> = curves
        .lines()
        .last()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(last[0] < last[1]);
}

#[test]
fn reproduce_example_one() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli(&["--reproduce", "example1", "--out", a.path().to_str().unwrap()]);
    let second = cli(&["--reproduce", "example1", "--out", b.path().to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
    let v = json(&first);
    assert_eq!(v["r"], serde_json::json!([1, 1, 7]));
    for name in [
        "result.json",
        "trace.csv",
        "trajectory.csv",
        "curves.csv",
        "summary.json",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn environment_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("chain.json");
    std::fs::write(
        &file,
        r#"{"type": "tensor", "states": 2, "controls": 2, "rows": [
            {"u": 1, "i": 1, "probs": [0.0, 1.0]}, {"u": 1, "i": 2, "probs": [0.0, 1.0]},
            {"u": 2, "i": 1, "probs": [1.0, 0.0]}, {"u": 2, "i": 2, "probs": [0.0, 1.0]}]}"#,
    )
    .unwrap();
    let f = file.to_str().unwrap();
    assert_eq!(
        cli(&["optimize", "--env-file", f]).status.code(),
        Some(2),
        "horizon required"
    );
    let v = json(&cli(&[
        "optimize",
        "--env-file",
        f,
        "--horizon",
        "20",
        "--param-space",
        "1:2,1:2,1:20",
    ]));
    assert_eq!(v["r"], serde_json::json!([1, 1, 7]));
}
