use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
hidden_layers = 1
hidden_size = 16
batch_size = 8
buffer_capacity = 2000
num_workers = 2
episodes_p = 2
episodes_o = 2
max_steps_p = 15
max_steps_o = 15
eval_every = 1
seed = 4
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_multiac6"));
    c.env_remove("MULTIAC6_OUTPUT_DIR").env_remove("MULTIAC6_DATASET_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let data = root.join("small.txt");
    ok(&["--config", s(&config), "gen-dataset", "--box", "small", "--n", "6", "--seed", "3", "--out", s(&data)]);
    Fixture { _dir: dir, root, config, data }
}

#[test]
fn full_pipeline_train_eval_rollout_inspect() {
    let f = fixture();
    let cfg = s(&f.config);
    let p = f.root.join("p.json");
    let o = f.root.join("o.json");
    let log = f.root.join("p_log.csv");
    let out = ok(&[
        "--config", cfg, "train", "--agent", "position", "--dataset", s(&f.data), "--reward", "mean", "--out", s(&p),
        "--log", s(&log), "--quiet",
    ]);
    assert!(out.contains("trained position"), "{out}");
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("episode,"));
    assert_eq!(log_text.lines().count(), 1 + 4);
    ok(&["--config", cfg, "train", "--agent", "orientation", "--dataset", s(&f.data), "--out", s(&o), "--quiet"]);

    let inspect = ok(&["inspect-checkpoint", s(&p)]);
    assert!(inspect.contains("role           position"), "{inspect}");
    assert!(inspect.contains("reward         mean"));
    assert!(inspect.contains("episodes       4"));

    let report = f.root.join("report.txt");
    let table = ok(&[
        "--config", cfg, "eval", "--position", s(&p), "--orientation", s(&o), "--dataset", s(&f.data), "--delta-p", "5,3",
        "--noise-sweep", "0,10", "--out", s(&report),
    ]);
    assert!(table.contains("SR"), "{table}");
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(f.root.join("report_sweep.csv").exists());

    let trace = f.root.join("trace.csv");
    let json = f.root.join("trace.json");
    let summary = ok(&[
        "--config", cfg, "rollout", "--position", s(&p), "--orientation", s(&o), "--dataset", s(&f.data), "--goal", "1",
        "--out", s(&trace), "--json", s(&json),
    ]);
    assert!(summary.contains("orientation") && summary.contains("position"), "{summary}");
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("# multiac6 trace v1"));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(parsed.is_object());

    // Same inputs, same trace.
    let again = f.root.join("trace2.csv");
    ok(&[
        "--config", cfg, "rollout", "--position", s(&p), "--orientation", s(&o), "--dataset", s(&f.data), "--goal", "1",
        "--out", s(&again),
    ]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn dataset_generation_is_reproducible() {
    let f = fixture();
    let again = f.root.join("again.txt");
    let out = ok(&["--config", s(&f.config), "gen-dataset", "--box", "small", "--n", "6", "--seed", "3", "--out", s(&again)]);
    assert!(out.contains("6 records"), "{out}");
    assert_eq!(std::fs::read(&f.data).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn usage_errors_exit_with_code_two() {
    let f = fixture();
    let cfg = s(&f.config);
    let p = f.root.join("p.json");
    ok(&["--config", cfg, "train", "--agent", "ac3", "--dataset", s(&f.data), "--out", s(&p), "--quiet"]);

    let trace = f.root.join("t.csv");
    let out = run(&[
        "--config", cfg, "rollout", "--position", s(&p), "--mode", "ac3", "--dataset", s(&f.data), "--goal", "99", "--out",
        s(&trace),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));

    // An AC3 checkpoint cannot stand in for the position agent.
    let out = run(&["--config", cfg, "eval", "--position", s(&p), "--mode", "multiac6_star", "--dataset", s(&f.data)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = f.root.join("bad.toml");
    std::fs::write(&bad, "gamma = 2.0\n").unwrap();
    let out = run(&["--config", s(&bad), "inspect-checkpoint", s(&p)]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(run(&["gen-dataset", "--box", "huge", "--n", "1", "--out", s(&trace)]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
}

#[test]
fn empty_dataset_is_rejected_by_eval() {
    let f = fixture();
    let cfg = s(&f.config);
    let p = f.root.join("p.json");
    ok(&["--config", cfg, "train", "--agent", "ac6", "--dataset", s(&f.data), "--out", s(&p), "--quiet"]);
    let empty = f.root.join("empty.txt");
    let text = std::fs::read_to_string(&f.data).unwrap();
    let (header, _) = text.split_once("end_header\n").unwrap();
    std::fs::write(&empty, format!("{}end_header\n", header.replace("records 6", "records 0"))).unwrap();
    let out = run(&["--config", cfg, "eval", "--position", s(&p), "--mode", "ac6", "--dataset", s(&empty)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_files_exit_with_code_three() {
    let f = fixture();
    let out = run(&["inspect-checkpoint", s(&f.root.join("nope.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["--config", s(&f.config), "train", "--agent", "position", "--dataset", "/nonexistent/x.txt", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(3));
}
