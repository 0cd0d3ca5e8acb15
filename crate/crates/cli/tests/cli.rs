use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levelsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelsim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const BASE: &str = r#"{"scenario": "base", "a": 1, "b": 0.5, "n0": 5, "times": [0.5, 1], "replicates": 50, "seed": 7}"#;

#[test]
fn simulate_is_reproducible_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.json", BASE);
    let mut outs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(name);
        let o = levelsim(&["simulate", "--config", &cfg, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(fs::read(out.join("trajectories.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
    let text = String::from_utf8(outs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("replicate,time,observable,value"));
    assert_eq!(lines.count(), 100);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.json", BASE);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = levelsim(&["simulate", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        fs::read(out.join("trajectories.csv")).unwrap()
    };
    assert_ne!(run("1", "x"), run("2", "y"));
}

#[test]
fn invalid_config_lists_every_problem_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"scenario": "base", "a": 1, "b": 3, "colour": "red", "replicates": 0}"#);
    let out = dir.path().join("never");
    let o = levelsim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("r*a - b"), "{err}");
    assert!(err.contains("`colour`"), "{err}");
    assert!(err.contains("`replicates`"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_config_file_exits_2() {
    let o = levelsim(&["simulate", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_runs_leave_no_output_behind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.json", BASE);
    let out = dir.path().join("partial");
    // a base scenario has no genealogy horizon
    let o = levelsim(&["genealogy", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn oracle_is_unavailable_for_cox() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cox.json", r#"{"scenario": "cox", "replicates": 3}"#);
    let out = dir.path().join("o");
    let o = levelsim(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn event_logs_are_written_per_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "log.json",
        r#"{"scenario": "catastrophe", "replicates": 3, "event_log": true, "times": [1]}"#,
    );
    let out = dir.path().join("o");
    let o = levelsim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..3 {
        let log = fs::read_to_string(out.join(format!("events_{i}.csv"))).unwrap();
        assert!(log.starts_with("event,time,id,parent_id,level\n"));
    }
}

#[test]
fn genealogy_counts_grow_by_at_most_one_per_birth_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"scenario": "genealogy", "a": 1, "b": 0.5, "r": 2, "n0": 5, "times": [0, 0.5, 1, 1.5], "horizon": 2, "replicates": 40}"#,
    );
    let out = dir.path().join("o");
    let o = levelsim(&["genealogy", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("genealogy.csv")).unwrap();
    let rows: Vec<(u64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[2], "ancestors");
            (f[0].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 160);
    assert!(rows.iter().any(|r| r.1 > 0.0));
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            assert!(w[1].1 >= w[0].1);
        }
    }
}

#[test]
fn oracle_writes_the_same_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mt.json",
        r#"{"scenario": "multitype", "birth_matrix": [[0.5, 0.5], [1.0, 0.2]], "death_rates": [0.2, -0.3], "replicates": 5}"#,
    );
    for cmd in ["simulate", "oracle"] {
        let out = dir.path().join(cmd);
        let o = levelsim(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let file = if cmd == "simulate" { "trajectories.csv" } else { "oracle.csv" };
        let text = fs::read_to_string(out.join(file)).unwrap();
        let observables: Vec<&str> = text.lines().skip(1).take(3).map(|l| l.split(',').nth(2).unwrap()).collect();
        assert_eq!(observables, ["count", "count_type_0", "count_type_1"]);
    }
}

#[test]
fn verify_writes_reports_and_exits_by_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (name, workers) in [("w1", "1"), ("w3", "3")] {
        let out = dir.path().join(name);
        let o = levelsim(&["verify", "--criteria", "12", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.starts_with("PASS criterion 12"), "{stdout}");
        reports.push(fs::read_to_string(out.join("reports.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].starts_with("name,statistic,p_value,threshold,pass,n\n"));
    assert_eq!(reports[0].lines().count(), 6);
}

#[test]
fn verify_rejects_bad_selectors() {
    let o = levelsim(&["verify", "--criteria", "15"]);
    assert_eq!(o.status.code(), Some(2));
}
