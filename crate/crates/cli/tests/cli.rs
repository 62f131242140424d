use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobot-pick"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--policy",
        "greedy",
        "--episodes",
        "3",
        "--seed",
        "4",
        "--out",
    ];
    let a = run(&[&args[..], &["a"]].concat(), dir.path());
    let b = run(&[&args[..], &["b"]].concat(), dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let ra = std::fs::read(dir.path().join("a/simulate.csv")).unwrap();
    let rb = std::fs::read(dir.path().join("b/simulate.csv")).unwrap();
    assert_eq!(ra, rb);
    assert!(String::from_utf8(ra).unwrap().lines().count() == 1 + 1 + 3 + 2);
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"episodes": 0}"#).unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(
        run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["simulate", "--preset", "XXL"], dir.path()).status.code(), Some(2));
    assert_eq!(
        run(&["simulate", "--policy", "checkpoint:missing.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["gen-instances", "--max-items", "12"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn preset_flag_applies_table_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"sim": {"total_picks": 60}}"#).unwrap();
    let out = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--preset",
            "S",
            "--episodes",
            "1",
            "--policy",
            "random",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("o/simulate.csv")).unwrap();
    // Ten pickers means ten workload columns.
    assert!(text.contains("workload_9_kg") && !text.contains("workload_10_kg"));
}

#[test]
fn instances_round_trip_through_oracle_compare() {
    let dir = tempfile::tempdir().unwrap();
    let g = run(
        &[
            "gen-instances",
            "--count",
            "3",
            "--max-items",
            "5",
            "--seed",
            "2",
            "--out",
            "inst",
        ],
        dir.path(),
    );
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    let c = run(
        &[
            "oracle-compare",
            "--instances",
            "inst",
            "--policy",
            "vi",
            "--out",
            "cmp",
        ],
        dir.path(),
    );
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let text = std::fs::read_to_string(dir.path().join("cmp/oracle_compare.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
    assert!(String::from_utf8_lossy(&c.stdout).contains("mean gap greedy"));
}

#[test]
fn efficiency_training_writes_checkpoint_usable_by_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.json");
    std::fs::write(
        &cfg,
        r#"{"sim": {"total_picks": 100}, "ppo": {"workers": 2, "steps_per_worker": 30, "minibatch": 30}, "episodes": 2}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let t = run(
        &[
            "train",
            "--config",
            c,
            "--mode",
            "efficiency",
            "--iterations",
            "1",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let s = run(
        &[
            "simulate",
            "--config",
            c,
            "--policy",
            "checkpoint:run/checkpoints/final.json",
            "--out",
            "ev",
        ],
        dir.path(),
    );
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
}
