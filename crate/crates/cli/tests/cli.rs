use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilbert-avoid")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_a_json_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cli(&["run", "--scenario", "crossing", "--seed", "3", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = dir.path().join("crossing_rkhs_d3_s3.json");
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.trim_start().starts_with('{'));
    assert!(text.contains("\"metrics\""));
    assert!(String::from_utf8_lossy(&o.stdout).contains(log.to_str().unwrap()));
}

#[test]
fn compare_writes_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nested/metrics.csv");
    let o = cli(&[
        "--threads",
        "2",
        "compare",
        "--scenario",
        "boxed_in",
        "--methods",
        "rkhs,gauss-lin",
        "--seeds",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("scenario,method,degree,seed"));
    assert!(header.ends_with("wall_clock_s,steps_per_s"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn surface_to_file_and_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("q.tsv");
    let o = cli(&["surface", "--scenario", "head_on", "--step", "1", "--out", tsv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&tsv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with('v')).collect();
    assert_eq!(rows.len(), 225);
    assert!(rows.iter().all(|r| r.split('\t').count() == 3));

    let o = cli(&["surface", "--scenario", "head_on", "--step", "1"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
}

#[test]
fn scenarios_lists_builtins() {
    let o = cli(&["scenarios"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["head_on", "crossing", "five_obstacles", "static_cluster", "corridor", "boxed_in"] {
        assert!(text.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let o = cli(&["run", "--scenario", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_scenario"));

    let o = cli(&["run", "--scenario", "head_on", "--method", "magic"]);
    assert_eq!(o.status.code(), Some(2));

    let o = cli(&["run", "--scenario", "head_on", "--eta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\ndt = \"fast\"\n").unwrap();
    let o = cli(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:2"), "{}", stderr(&o));
}

#[test]
fn scenario_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mine.toml");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/static_cluster.toml");
    std::fs::copy(src, &path).unwrap();
    let out = dir.path().join("logs");
    let o = cli(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--method",
        "greedy",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
}
