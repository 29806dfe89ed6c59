use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lqgame-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn lqgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqgame")).args(args).output().unwrap()
}

fn build_map(name: &str) -> PathBuf {
    let out = scratch(name);
    let game = fixture("double_integrator.json");
    let res = lqgame(&["build", "--game", game.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    out
}

#[test]
fn build_then_eval_prints_inputs() {
    let map = build_map("eval.json");
    let res = lqgame(&["eval", "--map", map.to_str().unwrap(), "--x", "0.5,-0.2"]);
    assert_eq!(res.status.code(), Some(0));
    let out: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(out["u"].as_array().unwrap().len(), 10);
}

#[test]
fn eval_outside_the_box_is_uncovered() {
    let map = build_map("outside.json");
    let res = lqgame(&["eval", "--map", map.to_str().unwrap(), "--x", "5,0"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn eval_at_an_infeasible_state() {
    let map = build_map("infeasible.json");
    let res = lqgame(&["eval", "--map", map.to_str().unwrap(), "--x", "2,1.5"]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn residual_of_the_explicit_solution_is_tiny() {
    let map = build_map("residual.json");
    let game = fixture("double_integrator.json");
    let res = lqgame(&[
        "residual",
        "--game",
        game.to_str().unwrap(),
        "--map",
        map.to_str().unwrap(),
        "--x",
        "-0.7,0.3",
    ]);
    assert_eq!(res.status.code(), Some(0));
    let r: f64 = String::from_utf8_lossy(&res.stdout).trim().parse().unwrap();
    assert!(r <= 1e-10);
}

#[test]
fn malformed_game_is_a_config_error() {
    let bad = scratch("bad.json");
    std::fs::write(&bad, r#"{"A": [[1.0]], "B": [], "Q": [], "R": [], "T": 2}"#).unwrap();
    let res = lqgame(&["build", "--game", bad.to_str().unwrap(), "--out", scratch("never.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn bench_writes_rows_and_table() {
    let csv = scratch("bench.csv");
    let table = scratch("table.csv");
    let res = lqgame(&[
        "bench",
        "--config",
        fixture("bench_small.json").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = std::fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2 * 5);
    let table = std::fs::read_to_string(table).unwrap();
    assert!(table.starts_with("T,n_x=2,n_x=3"));
}

#[test]
fn short_simulation_writes_a_trajectory() {
    let out = scratch("traj.csv");
    let res = lqgame(&[
        "simulate",
        "--scenario",
        fixture("overtake.json").to_str().unwrap(),
        "--steps",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 21);
}
