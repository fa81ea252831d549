use std::path::Path;
use std::process::{Command, Output};

fn verso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verso"))
        .args(args)
        .output()
        .expect("spawn verso")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        &["frobnicate"][..],
        &["bench", "--threads", "0"],
        &["bench", "--algo", "lockfree", "--threads", "129"],
        &["lincheck", "--ops", "40"],
        &["lincheck", "--threads", "5"],
        &["stress", "--seconds", "-1"],
    ] {
        assert_eq!(verso(args).status.code(), Some(64), "{args:?}");
    }
    assert_eq!(verso(&["--help"]).status.code(), Some(0));
}

#[test]
fn stress_writes_a_clean_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stress.json");
    let o = verso(&[
        "stress", "--algo", "lockfree", "-p", "3", "--seconds", "0.3", "-n", "100", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(&out);
    assert_eq!(v["command"], "stress");
    assert_eq!(v["algo"], "lockfree");
    assert_eq!(v["true_release_violations"], 0);
    assert_eq!(v["audit"]["passed"], true);
    let stdout: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, v);
}

#[test]
fn sequential_bench_with_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let csv = dir.path().join("live.csv");
    let o = verso(&[
        "bench", "-p", "4", "--rounds", "30", "-n", "300", "--nu", "3", "--nq", "5", "--out",
        out.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["commits"], 30);
    assert_eq!(v["read_txns"], 90);
    assert_eq!(v["serializability"]["passed"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("commit,elapsed_us,live_versions"));
    assert_eq!(lines.count(), 30);
}

#[test]
fn leaking_bench_is_reported_but_not_audited() {
    let o = verso(&["bench", "-p", "2", "--rounds", "10", "-n", "100", "--no-collect"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["audit"]["performed"], false);
    assert!(v["allocated_tuples"].as_u64().unwrap() > v["tree_size"].as_u64().unwrap());
}

#[test]
fn lincheck_campaign_passes() {
    let o = verso(&["lincheck", "--algo", "waitfree", "--trials", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], 50);
    assert_eq!(v["failed"], 0);
}

const STALE_READ: &str = "\
# processes 2
# initial 0
0 invoke 0 acquire - -
1 respond 0 acquire - data:0
2 invoke 0 set 5 -
3 respond 0 set 5 unit
4 invoke 1 acquire - -
5 respond 1 acquire - data:0
";

const OVERLAPPING_READ: &str = "\
# processes 2
# initial 0
0 invoke 0 acquire - -
1 respond 0 acquire - data:0
2 invoke 0 set 5 -
3 invoke 1 acquire - -
4 respond 1 acquire - data:0
5 respond 0 set 5 unit
";

#[test]
fn check_history_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.hist");
    let good = dir.path().join("good.hist");
    std::fs::write(&bad, STALE_READ).unwrap();
    std::fs::write(&good, OVERLAPPING_READ).unwrap();

    let o = verso(&["check-history", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["linearizable"], false);

    assert_eq!(verso(&["check-history", good.to_str().unwrap()]).status.code(), Some(0));

    let missing = dir.path().join("missing.hist");
    assert_eq!(verso(&["check-history", missing.to_str().unwrap()]).status.code(), Some(74));

    std::fs::write(&bad, "0 invoke 0 acquire - -\n").unwrap();
    assert_eq!(verso(&["check-history", bad.to_str().unwrap()]).status.code(), Some(64));
}
