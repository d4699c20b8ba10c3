use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SHORT: &str = r#"{"name": "short", "sim_time_s": 600, "workload": {"tasks": 4, "arrival_window_s": 300}}"#;

fn macloud(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macloud"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a metrics.csv as (scenario, scheme, seed, tasks, error).
fn rows(path: &Path) -> Vec<(String, String, u64, usize, String)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (sc, sh, se, ta, er) = (col("scenario"), col("scheme"), col("seed"), col("tasks"), col("error"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[sc].into(), f[sh].into(), f[se].parse().unwrap(), f[ta].parse().unwrap(), f[er].into())
        })
        .collect()
}

#[test]
fn run_writes_metrics_and_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let out = tmp.path().join("out");
    let o = macloud(&["run", "--config", s(&cfg), "--scheme", "hta", "--seed", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out.join("metrics.csv"));
    assert_eq!(r, vec![("short".into(), "hta".into(), 3, 4, String::new())]);
    let trace = fs::read_to_string(out.join("trace.log")).unwrap();
    assert!(trace.lines().count() > 10);
    assert!(trace.lines().any(|l| l.split_whitespace().nth(1) == Some("submit")));
}

#[test]
fn run_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = macloud(&["run", "--config", s(&cfg), "--scheme", "proposed", "--seed", "7", "--out", s(dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["metrics.csv", "trace.log"] {
        assert!(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn power_mode_flag_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let out = tmp.path().join("out");
    let o = macloud(&["run", "--config", s(&cfg), "--power-mode", "max-only", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",max-only,"));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("missing.json");
    let malformed = write(tmp.path(), "bad.json", "{ not json");
    let unknown = write(tmp.path(), "unknown.json", r#"{"sede": 1}"#);
    let invalid = write(tmp.path(), "invalid.json", r#"{"roles": {"smn": 99, "scns": [1]}}"#);
    for cfg in [&missing, &malformed, &unknown, &invalid] {
        let o = macloud(&["run", "--config", s(cfg), "--out", s(&out)]);
        assert_eq!(code(&o), 1, "{}: {}", cfg.display(), stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
    assert!(!out.exists());
    let o = macloud(&["run", "--preset", "s1", "--scheme", "fastest", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let o = macloud(&["run", "--preset", "s9", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let o = macloud(&["sweep", "--preset", "s1", "--tasks", "10", "--seeds", "5..2", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let blocker = write(tmp.path(), "file", "");
    let o = macloud(&["run", "--config", s(&cfg), "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn sweep_covers_product_in_sorted_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let out = tmp.path().join("sweep");
    let o = macloud(&[
        "sweep", "--config", s(&cfg), "--tasks", "2,0", "--seeds", "2..3", "--schemes", "all", "--out", s(&out), "--threads", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out.join("metrics.csv"));
    assert_eq!(r.len(), 2 * 2 * 3);
    assert!(r.iter().all(|x| x.4.is_empty()));
    let keys: Vec<_> = r.iter().map(|x| (x.0.clone(), x.1.clone(), x.2, x.3)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], ("short".into(), "hta".into(), 2, 0));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("scenario,tasks,scheme,power_mode,runs,errors,atct_mean,atct_sd"));
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    let imp = fs::read_to_string(out.join("improvement.csv")).unwrap();
    // two baselines, two seeds, two task counts
    assert_eq!(imp.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn sweep_scheme_subset_and_traces() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let out = tmp.path().join("sweep");
    let o = macloud(&[
        "sweep", "--config", s(&cfg), "--tasks", "1", "--seeds", "4,9", "--schemes", "minhop,proposed", "--out", s(&out), "--traces",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out.join("metrics.csv"));
    let order: Vec<_> = r.iter().map(|x| (x.1.as_str(), x.2)).collect();
    assert_eq!(order, [("minhop", 4), ("minhop", 9), ("proposed", 4), ("proposed", 9)]);
    assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 4);
}

#[test]
fn report_writes_one_series_per_scheme() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT);
    let out = tmp.path().join("sweep");
    let o = macloud(&["sweep", "--config", s(&cfg), "--tasks", "1,2", "--seeds", "1..2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for metric in ["atct", "tx_energy", "control_packets"] {
        let o = macloud(&["report", "--in", s(&out), "--metric", metric]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = fs::read_to_string(out.join(format!("series_{metric}.tsv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("series\tx\tmean\tsd\tn"));
        let pts: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
        assert_eq!(pts.len(), 3 * 2);
        let series: std::collections::BTreeSet<&str> = pts.iter().map(|p| p[0]).collect();
        assert_eq!(series.into_iter().collect::<Vec<_>>(), ["hta", "minhop", "proposed"]);
        assert!(pts.iter().all(|p| p[4] == "2"));
    }
}

#[test]
fn report_rejects_unknown_metric() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "metrics.csv", "");
    let o = macloud(&["report", "--in", s(tmp.path()), "--metric", "latency"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for m in ["atct", "tx_energy", "control_packets"] {
        assert!(err.contains(m), "{err}");
    }
    assert!(!tmp.path().join("series_latency.tsv").exists());
}

#[test]
fn report_on_empty_csv_warns() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "metrics.csv", "");
    let o = macloud(&["report", "--in", s(tmp.path()), "--metric", "atct"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let text = fs::read_to_string(tmp.path().join("series_atct.tsv")).unwrap();
    assert_eq!(text, "series\tx\tmean\tsd\tn\n");
}

#[test]
fn report_without_csv_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = macloud(&["report", "--in", s(tmp.path()), "--metric", "atct"]);
    assert_eq!(code(&o), 1);
}
