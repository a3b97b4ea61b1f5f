use std::path::Path;
use std::process::{Command, Output};

use focalbci_core::data::{load_dataset, CsvSchema};
use focalbci_core::model_file::load_model;

fn focalbci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focalbci"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = focalbci(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    ok(&["gen-synthetic", "--out", p(&path), "--n-per-class", &n.to_string(), "--seed", &seed.to_string()]);
    path
}

const SMALL_TRAIN: [&str; 12] = [
    "--kprime", "28", "--selector", "center", "--focal-length", "8", "--iterations", "30", "--hidden", "8", "--seed", "7",
];

#[test]
fn gen_synthetic_writes_requested_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "d.csv", 5, 1);
    let ds = load_dataset(&path, &CsvSchema::default()).unwrap();
    assert_eq!(ds.len(), 30);
    assert_eq!(ds.class_counts(), vec![5; 6]);
}

#[test]
fn train_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 8, 2);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let mut args = vec!["train", "--data", p(&data), "--out", p(out)];
        args.extend(SMALL_TRAIN);
        let stdout = ok(&args);
        assert!(stdout.contains("test accuracy"), "{stdout}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let history = std::fs::read_to_string(dir.path().join("a.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 31);
    assert!(history.starts_with("iteration,loss\n"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["focal_state"]["end_idx"].as_u64().unwrap() - metrics["focal_state"]["start_idx"].as_u64().unwrap(), 8);
    assert!(metrics["test"]["confusion"].is_array());
}

#[test]
fn train_with_search_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 8, 3);
    let model = dir.path().join("m.json");
    let stdout = ok(&[
        "train", "--data", p(&data), "--out", p(&model), "--kprime", "28", "--episodes", "2", "--steps", "5",
        "--initial-length", "16", "--iterations", "5", "--hidden", "6", "--seed", "1",
    ]);
    assert!(stdout.contains("focal reward"), "{stdout}");
    let trace = std::fs::read_to_string(dir.path().join("m.search.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["training"]["focal_selector"], "sam");
    assert_eq!(doc["hyperparameters"]["sam"]["episodes"], 2);
}

#[test]
fn optimize_writes_focal_state_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 8, 4);
    let out = dir.path().join("focal.json");
    ok(&[
        "optimize", "--data", p(&data), "--out", p(&out), "--kprime", "28", "--episodes", "3", "--steps", "4",
        "--initial-length", "16", "--seed", "5",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (s, e) = (doc["focal_state"]["start_idx"].as_u64().unwrap(), doc["focal_state"]["end_idx"].as_u64().unwrap());
    assert!(s < e && e <= 28 && e - s >= 10);
    let hist = std::fs::read_to_string(dir.path().join("focal.history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 13);
}

#[test]
fn evaluate_prints_exact_accuracy_and_latency() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 8, 5);
    let test = gen(dir.path(), "t.csv", 4, 6);
    let model = dir.path().join("m.json");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&model)];
    args.extend(SMALL_TRAIN);
    ok(&args);

    let json = dir.path().join("eval.json");
    let stdout = ok(&[
        "evaluate", "--model", p(&model), "--data", p(&test), "--latency", "--window-size", "16", "--latency-windows",
        "3", "--json", p(&json),
    ]);
    let expected = load_model(&model)
        .unwrap()
        .evaluate(&load_dataset(&test, &CsvSchema::default()).unwrap())
        .unwrap();
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("accuracy "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(printed.to_bits(), expected.accuracy.to_bits());
    let ms: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("latency_ms_per_window "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(ms < 1000.0, "{ms}");
    assert!(stdout.contains("confusion"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["metrics"]["accuracy"].as_f64().unwrap().to_bits(), expected.accuracy.to_bits());
}

#[test]
fn replay_to_stdout_emits_windows_then_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 10, 8);
    let stdout = ok(&["replay", "--data", p(&data), "--class", "3", "--window-size", "4", "--rate", "200"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with(r#"{"type":"window""#));
    assert_eq!(lines[2], r#"{"type":"end","windows":2}"#);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 4, 9);
    assert_eq!(focalbci(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(focalbci(&["teleport"]).status.code(), Some(2));
    assert_eq!(focalbci(&["--help"]).status.code(), Some(0));
    let unknown = focalbci(&["train", "--data", p(&data), "--selector", "oracle", "--out", p(&dir.path().join("x.json"))]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("oracle"));
    assert_eq!(focalbci(&["train", "--data", p(&data), "--weight-decay", "sideways"]).status.code(), Some(2));
    assert_eq!(focalbci(&["replay", "--data", p(&data), "--class", "9"]).status.code(), Some(2));
    assert_eq!(focalbci(&["replay", "--data", p(&data), "--rate", "0"]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(focalbci(&["replay", "--data", p(&missing)]).status.code(), Some(1));
    let corrupt = dir.path().join("bad.json");
    std::fs::write(&corrupt, "{\"format_version\": 1").unwrap();
    assert_eq!(focalbci(&["evaluate", "--model", p(&corrupt), "--data", p(&data)]).status.code(), Some(2));
}

#[test]
fn serve_reads_port_from_environment() {
    use std::io::{BufRead, BufReader, Write};
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 8, 10);
    let model = dir.path().join("m.json");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&model)];
    args.extend(SMALL_TRAIN);
    ok(&args);

    let mut child = Command::new(env!("CARGO_BIN_EXE_focalbci"))
        .args(["serve", "--model", p(&model), "--window-size", "2", "--replay-data", p(&data)])
        .env("FOCALBCI_PORT", "0")
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut banner).unwrap();
    let addr = banner.trim().strip_prefix("listening on ").unwrap().to_string();
    assert!(!addr.ends_with(":0"));

    let stream = std::net::TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    writeln!(writer, r#"{{"type":"intent","label":1}}"#).unwrap();
    let mut reply = String::new();
    reader.read_line(&mut reply).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with(r#"{"type":"decision","label":"#), "{reply}");
}
