use std::path::Path;
use std::process::{Command, Output};

use btacm::signal::{read_epz, synth_var, write_epz, Dataset, Epoch, SynthConfig};
use nalgebra::DMatrix;

fn btacm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btacm")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_synth(path: &Path, channels: usize, per_class: usize, samples: usize, seed: u64) {
    let ds = synth_var(&SynthConfig::new(channels, per_class, samples, 250.0), seed).unwrap();
    write_epz(&ds, path).unwrap();
}

#[test]
fn synth_writes_a_readable_deterministic_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.epz");
    let b = dir.path().join("b.epz");
    for p in [&a, &b] {
        let o = btacm(&["synth", "--channels", "3", "--epochs-per-class", "10", "--samples", "128", "--seed", "9", "--out", path_str(p)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ds = read_epz(&a).unwrap();
    assert_eq!((ds.len(), ds.channels(), ds.samples()), (20, 3, 128));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn synth_without_out_is_a_usage_error() {
    assert_eq!(btacm(&["synth"]).status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(btacm(&["bench", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(btacm(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    assert_eq!(btacm(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_rejects_out_of_range_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.epz");
    write_synth(&data, 3, 10, 256, 1);
    let o = btacm(&["eval", "--data", path_str(&data), "--p-range", "0:10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = btacm(&["eval", "--data", path_str(&data), "--p-range", "1:11"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = btacm(&["eval", "--data", path_str(&data), "--pipeline", "nope"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn eval_prints_summary_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.epz");
    let report = dir.path().join("r.json");
    write_synth(&data, 3, 12, 256, 2);
    let o = btacm(&[
        "eval", "--data", path_str(&data), "--p-range", "1:3", "--tau-range", "1:2", "--outer", "3", "--inner", "2",
        "--report", path_str(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.starts_with("bt-acm: AUC "), "{line}");
    assert!(line.contains("over 3 folds"), "{line}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["folds"].as_array().unwrap().len(), 3);
    assert!(json["total_ms"].is_number());
    assert_eq!(json["band"], serde_json::json!([8.0, 32.0]));
}

#[test]
fn transform_column_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d3.epz");
    write_synth(&data, 3, 10, 200, 3);
    let csv = dir.path().join("f.csv");

    let o = btacm(&["transform", "--data", path_str(&data), "--p", "4", "--tau", "2", "--out", path_str(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    // 6 SPD coordinates + 3 levels of 9 entries, plus the label
    assert_eq!(lines[0].split(',').count(), 34);
    assert!(lines[0].starts_with("label,"));
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 34);
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }

    let o = btacm(&["transform", "--data", path_str(&data), "--p", "1", "--tau", "1", "--out", path_str(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(header.split(',').count(), 1 + 6);
}

#[test]
fn transform_rejects_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.epz");
    let ds = Dataset {
        epochs: vec![],
        fs: 250.0,
        class_names: vec!["a".into(), "b".into()],
    };
    write_epz(&ds, &data).unwrap();
    let o = btacm(&["transform", "--data", path_str(&data), "--p", "2", "--tau", "1", "--out", path_str(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn transform_names_the_short_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("short.epz");
    let epochs = (0..4)
        .map(|i| Epoch::new(DMatrix::from_fn(2, 6, |r, c| ((r * 7 + c * 3 + i) % 5) as f64), (i % 2) as u32).unwrap())
        .collect();
    write_epz(&Dataset::new(epochs, 250.0, vec!["a".into(), "b".into()]).unwrap(), &data).unwrap();
    let o = btacm(&["transform", "--data", path_str(&data), "--p", "4", "--tau", "2", "--out", path_str(&dir.path().join("x.csv"))]);
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("epoch 0"), "{}", stderr(&o));
}

#[test]
fn bench_single_trial_json() {
    let o = btacm(&["bench", "--channels", "4", "--p", "3", "--tau", "1", "--trials", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(json["full_median_ms"].as_f64().unwrap() > 0.0);
    assert!(json["bt_median_ms"].as_f64().unwrap() > 0.0);
    assert!(json["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(json["trials"], 1);
}

#[test]
fn zero_threads_is_a_usage_error() {
    assert_eq!(btacm(&["--threads", "0", "bench", "--trials", "1", "--channels", "2", "--p", "2"]).status.code(), Some(2));
}
