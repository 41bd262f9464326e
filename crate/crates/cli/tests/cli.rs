use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use greenwave::experiment::{parse_eval_csv, parse_trace_csv};
use greenwave::marl::{Agents, Checkpoint};
use greenwave::{fixtures, Scenario};
use tempfile::TempDir;

fn greenwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenwave"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = greenwave(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, s.to_json()).unwrap();
    path
}

/// Corridor with a short horizon so end-to-end runs stay quick.
fn short_corridor(n: usize) -> Scenario {
    let mut s = fixtures::corridor(n);
    s.demand.horizon_s = 600;
    s.training.episodes_per_iteration = 2;
    s.training.epochs = 1;
    s
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn validate_accepts_fixture_and_names_ratio_violation() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["fixture", "corridor", "--size", "2", "--out", "."]);
    let out = ok(d, &["validate", "--scenario", "corridor.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("network ok"));

    let mut s = fixtures::corridor(2);
    s.network.intersections[0].movements[0].turning_ratio += 0.1;
    write_scenario(d, "bad.json", &s);
    let out = greenwave(d, &["validate", "--scenario", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("turning ratios sum 1.1 ≠ 1"));
}

#[test]
fn bad_config_names_the_json_path() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut v: serde_json::Value = serde_json::from_str(&fixtures::corridor(1).to_json()).unwrap();
    v["training"]["gamma"] = serde_json::json!("high");
    std::fs::write(d.join("s.json"), v.to_string()).unwrap();
    let out = greenwave(d, &["train", "--scenario", "s.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("training.gamma"), "{}", stderr(&out));

    let mut s = fixtures::corridor(1);
    s.training.clip = -1.0;
    write_scenario(d, "neg.json", &s);
    let out = greenwave(d, &["train", "--scenario", "neg.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("clip"), "{}", stderr(&out));
}

#[test]
fn zero_iterations_checkpoint_is_the_initialization() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let s = short_corridor(2);
    write_scenario(d, "c.json", &s);
    ok(d, &["train", "--scenario", "c.json", "--scope", "neighbor", "--algo", "mappo", "--seed", "1", "--iterations", "0"]);
    let saved = Checkpoint::load(&d.join("out/checkpoint.json")).unwrap();
    let mut cfg = s.training.clone();
    cfg.seed = 1;
    let env = s.compile().unwrap();
    let init = Agents::init(&env, &cfg);
    assert_eq!(saved, Checkpoint::new(&init, cfg.scope, cfg.algo, &env.actions.values));
    assert_eq!(read(d.join("out/curve.csv")), "iteration,mean_reward,eval_awt\n");
}

#[test]
fn training_twice_gives_identical_curves_and_replay_matches() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_scenario(d, "c.json", &short_corridor(2));
    let args = ["train", "--scenario", "c.json", "--seed", "3", "--iterations", "2"];
    ok(d, &[&args[..], &["--out", "a"]].concat());
    ok(d, &[&args[..], &["--out", "b"]].concat());
    assert_eq!(read(d.join("a/curve.csv")), read(d.join("b/curve.csv")));
    assert_eq!(read(d.join("a/curve.csv")).lines().count(), 3);
    ok(d, &["replay", "a/train.lock.json", "--out", "r"]);
    for f in ["curve.csv", "checkpoint.json", "train.lock.json"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("r").join(f)), "{f}");
    }
}

#[test]
fn eval_writes_replications_and_mean_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_scenario(d, "c.json", &short_corridor(2));
    ok(d, &["eval", "--scenario", "c.json", "--controller", "fixtime", "--controller", "maxpressure", "--replications", "3"]);
    let rows = parse_eval_csv(&read(d.join("out/eval.csv")), "eval.csv").unwrap();
    assert_eq!(rows.len(), 8);
    for (k, c) in ["fixtime", "maxpressure"].iter().enumerate() {
        let group = &rows[k * 4..k * 4 + 4];
        assert!(group.iter().all(|r| r.controller == *c && r.demand == "c"));
        assert!(group[..3].iter().all(|r| r.seed.is_some()));
        assert_eq!(group[3].seed, None);
    }
    ok(d, &["replay", "out/eval.lock.json", "--out", "r"]);
    assert_eq!(read(d.join("out/eval.csv")), read(d.join("r/eval.csv")));
}

#[test]
fn eval_on_zero_demand_reports_no_vehicles() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut s = short_corridor(1);
    write_scenario(d, "c.json", &s);
    s.demand = s.demand.scaled(0.0);
    write_scenario(d, "empty.json", &s);
    ok(d, &["eval", "--scenario", "c.json", "--controller", "fixtime", "--demand", "empty=empty.json", "--replications", "2"]);
    let text = read(d.join("out/eval.csv"));
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",NA,NA,NA,0.00"), "{line}");
    }
}

#[test]
fn mismatched_checkpoint_is_a_dimension_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_scenario(d, "one.json", &short_corridor(1));
    write_scenario(d, "three.json", &short_corridor(3));
    ok(d, &["train", "--scenario", "one.json", "--iterations", "0", "--scope", "neighbor", "--out", "t"]);
    let out = greenwave(d, &["eval", "--scenario", "three.json", "--controller", "t/checkpoint.json", "--replications", "1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("dimension mismatch"), "{}", stderr(&out));
}

#[test]
fn compare_joins_marks_best_and_detects_mismatches() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let s = short_corridor(2);
    write_scenario(d, "c.json", &s);
    let mut heavy = s.clone();
    heavy.demand = heavy.demand.scaled(1.5);
    write_scenario(d, "heavy.json", &heavy);
    let base = ["eval", "--scenario", "c.json", "--controller", "fixtime", "--controller", "maxpressure", "--replications", "2"];
    ok(d, &[&base[..], &["--demand", "base=c.json", "--demand", "heavy=heavy.json", "--out", "a"]].concat());

    let out = ok(d, &["compare", "x=a/eval.csv", "y=a/eval.csv", "--out", "c"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains('*'));
    let csv = read(d.join("c/compare.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "source,controller,demand,n,ATT,AWT,AD,VC,dATT,dAWT,dAD,dVC,best");
    assert_eq!(lines.len(), 1 + 8);
    for line in &lines[1..] {
        assert!(line.contains(",0.00,0.00,0.00,0.00,"), "{line}");
    }
    assert_eq!(lines.iter().filter(|l| l.starts_with("x,")).count(), 4);

    ok(d, &[&base[..], &["--demand", "base=c.json", "--out", "b"]].concat());
    let out = greenwave(d, &["compare", "a/eval.csv", "b/eval.csv", "--out", "m"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("join error"), "{}", stderr(&out));

    ok(d, &["replay", "c/compare.lock.json", "--out", "r"]);
    assert_eq!(read(d.join("c/compare.csv")), read(d.join("r/compare.csv")));
    assert_eq!(read(d.join("c/compare.txt")), read(d.join("r/compare.txt")));
}

#[test]
fn fixtime_trace_is_constant_and_unknown_phase_fails() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["fixture", "stepped", "--out", "."]);
    ok(d, &["trace", "--scenario", "stepped.json", "--controller", "fixtime", "--intersection", "0", "--phase", "0"]);
    let rows = parse_trace_csv(&read(d.join("out/trace.csv"))).unwrap();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| r.green_s == 47));
    let out = greenwave(d, &["trace", "--scenario", "stepped.json", "--controller", "fixtime", "--phase", "9"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown"), "{}", stderr(&out));
}

#[test]
fn thread_cap_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_scenario(d, "c.json", &short_corridor(2));
    let args = ["eval", "--scenario", "c.json", "--controller", "fixtime", "--replications", "4"];
    ok(d, &[&args[..], &["--out", "a"]].concat());
    let capped = Command::new(env!("CARGO_BIN_EXE_greenwave"))
        .current_dir(d)
        .env("GREENWAVE_THREADS", "1")
        .args([&args[..], &["--out", "b"]].concat())
        .output()
        .unwrap();
    assert!(capped.status.success());
    assert_eq!(read(d.join("a/eval.csv")), read(d.join("b/eval.csv")));
}
