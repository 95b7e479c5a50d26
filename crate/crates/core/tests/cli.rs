use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rosetta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rosetta")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small generated dataset: 300 documents per domain.
fn generate_small(dir: &Path, occupancy: f64) {
    let cfg = dir.join("gen.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"n_docs": 300, "n_eval_docs": 100, "specialized_token_occupancy": {occupancy}, "ewc_examples": 200}}"#),
    )
    .unwrap();
    let out = rosetta(&["generate", "--config", p(&cfg), "--output-dir", p(dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_1() {
    let none = rosetta(&[]);
    assert_eq!(code(&none), 1);
    assert!(stderr(&none).contains("Usage"));
    assert_eq!(code(&rosetta(&["frobnicate"])), 1);
    assert_eq!(code(&rosetta(&["score", "--no-such-flag"])), 1);
    assert_eq!(code(&rosetta(&["score"])), 1);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&rosetta(&["--help"])), 0);
    assert_eq!(code(&rosetta(&["--version"])), 0);
    assert!(stdout(&rosetta(&["bench", "--help"])).contains("--adapter"));
}

#[test]
fn score_all_correct_gives_zero_pim() {
    let dir = tempfile::tempdir().unwrap();
    let out = rosetta(&[
        "score",
        "--records",
        p(&fixture("records/all_correct.jsonl")),
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 1);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["pim"], 0.0);
    assert!(report.get("ars").is_none());
}

#[test]
fn score_with_transitions_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = rosetta(&[
        "score",
        "--records",
        p(&fixture("records/all_correct.jsonl")),
        "--transitions",
        p(&fixture("records/transitions.json")),
        "--dsi",
        "0.4",
        "--format",
        "csv",
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let cdcs = csv.lines().find(|l| l.starts_with("cdcs,")).unwrap();
    let v: f64 = cdcs[5..].parse().unwrap();
    assert!((v - 0.66 / 0.92).abs() < 1e-12);
    // header, two accuracies, pim, cdcs, ars, two latencies, n_records, dsi
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn score_error_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let od = p(dir.path());
    let malformed = rosetta(&["score", "--records", p(&fixture("records/malformed.jsonl")), "--output-dir", od]);
    assert_eq!(code(&malformed), 1);
    assert!(stderr(&malformed).contains(":2:"), "{}", stderr(&malformed));
    assert!(stdout(&malformed).is_empty());

    let missing_tag = rosetta(&["score", "--records", p(&fixture("records/only_general.jsonl")), "--output-dir", od]);
    assert_eq!(code(&missing_tag), 1);
    assert!(stderr(&missing_tag).contains("specialized"));

    let bad_dsi = rosetta(&["score", "--records", p(&fixture("records/all_correct.jsonl")), "--dsi", "1.5", "--output-dir", od]);
    assert_eq!(code(&bad_dsi), 1);

    let absent = rosetta(&["score", "--records", p(&dir.path().join("nope.jsonl")), "--output-dir", od]);
    assert_eq!(code(&absent), 2);
}

#[test]
fn unwritable_output_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let out = rosetta(&[
        "score",
        "--records",
        p(&fixture("records/all_correct.jsonl")),
        "--output-dir",
        p(&file.join("sub")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn generate_then_dsi_recovers_occupancy() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), 0.3);
    let out = rosetta(&[
        "dsi",
        "--target",
        p(&dir.path().join("source.jsonl")),
        "--reference",
        p(&dir.path().join("target.jsonl")),
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("dsi 0.3"), "{}", stdout(&out));
    let result = read_json(&dir.path().join("dsi.json"));
    assert!((result["dsi"].as_f64().unwrap() - 0.3).abs() <= 0.05);

    let bad = rosetta(&[
        "dsi",
        "--target",
        p(&dir.path().join("source.jsonl")),
        "--reference",
        p(&dir.path().join("target.jsonl")),
        "--ratio",
        "0.5",
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn generate_is_reproducible_and_validates() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_small(a.path(), 0.3);
    generate_small(b.path(), 0.3);
    for name in ["source.jsonl", "suite.json", "ewc_task_a.jsonl", "balanced.jsonl"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let seeded = rosetta(&["generate", "--seed", "7", "--output-dir", p(&a.path().join("s7"))]);
    assert_eq!(code(&seeded), 0);
    assert_eq!(read_json(&a.path().join("s7/generator_config.json"))["seed"], 7);

    let cfg = a.path().join("bad.json");
    std::fs::write(&cfg, r#"{"n_docs": 0}"#).unwrap();
    assert_eq!(code(&rosetta(&["generate", "--config", p(&cfg), "--output-dir", p(a.path())])), 1);
    std::fs::write(&cfg, r#"{"n_dogs": 10}"#).unwrap();
    assert_eq!(code(&rosetta(&["generate", "--config", p(&cfg), "--output-dir", p(a.path())])), 1);
}

#[test]
fn bench_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = rosetta(&[
        "bench",
        "--manifest",
        p(&fixture("small_suite/suite.json")),
        "--adapter",
        &format!("offline:{}", p(&fixture("small_suite/predictions.jsonl"))),
        "--output-dir",
        p(&run_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("pim 0.2500"), "{}", stdout(&out));
    assert!(run_dir.join("records.jsonl").is_file());

    let re = dir.path().join("re");
    let out = rosetta(&["report", "--run-dir", p(&run_dir), "--format", "csv", "--output-dir", p(&re)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let original = read_json(&run_dir.join("report.json"));
    let csv = std::fs::read_to_string(re.join("report.csv")).unwrap();
    assert!(csv.contains(&format!("cdcs,{}", original["cdcs"])));
}

#[test]
fn bench_error_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let od = p(dir.path());
    let manifest = fixture("small_suite/suite.json");

    let missing_preds = rosetta(&["bench", "--manifest", p(&manifest), "--adapter", "offline:/no/such/file.jsonl", "--output-dir", od]);
    assert_eq!(code(&missing_preds), 2);

    let bad_spec = dir.path().join("adapter.json");
    std::fs::write(&bad_spec, r#"{"mode": "offline", "predictions_path": "x", "command": ["y"]}"#).unwrap();
    assert_eq!(code(&rosetta(&["bench", "--manifest", p(&manifest), "--adapter", p(&bad_spec), "--output-dir", od])), 1);

    let no_such_cmd = rosetta(&["bench", "--manifest", p(&manifest), "--adapter", "subprocess:/no/such/binary", "--output-dir", od]);
    assert_eq!(code(&no_such_cmd), 2);

    let one_segment = dir.path().join("one.json");
    std::fs::write(
        &one_segment,
        format!(
            r#"{{"suite_id": "x", "tasks": [{{"kind": "transition", "task_id": "t", "segments": [{{"domain_tag": "general", "data_ref": "{}"}}]}}]}}"#,
            p(&fixture("small_suite/items_general.jsonl"))
        ),
    )
    .unwrap();
    let out = rosetta(&["bench", "--manifest", p(&one_segment), "--adapter", "offline:x", "--output-dir", od]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("≥ 2 segments"));

    let dangling = dir.path().join("dangling.json");
    std::fs::write(
        &dangling,
        r#"{"suite_id": "x", "tasks": [{"kind": "single", "task_id": "t", "domain_tag": "general", "data_ref": "gone.jsonl"}]}"#,
    )
    .unwrap();
    let out = rosetta(&["bench", "--manifest", p(&dangling), "--adapter", "offline:x", "--output-dir", od]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gone.jsonl"));
}

#[test]
fn bench_with_echo_subprocess() {
    let dir = tempfile::tempdir().unwrap();
    let out = rosetta(&[
        "bench",
        "--manifest",
        p(&fixture("small_suite/suite.json")),
        "--adapter",
        &format!("subprocess:{}", env!("CARGO_BIN_EXE_rosetta-echo-adapter")),
        "--output-dir",
        p(dir.path()),
    ]);
    // The echo child answers with the prompt, which never equals the expected
    // answer. Zero accuracy in both domains leaves PIM undefined.
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("PIM is undefined"));
}

#[test]
fn scl_and_ewc_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), 0.3);
    let d = dir.path();
    let out = rosetta(&[
        "scl",
        "--source",
        p(&d.join("source.jsonl")),
        "--target",
        p(&d.join("target.jsonl")),
        "--pivots",
        "30",
        "--dims",
        "10",
        "--predict",
        p(&d.join("items_general.jsonl")),
        "--output-dir",
        p(&d.join("scl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("target accuracy"));
    let model = read_json(&d.join("scl/scl_model.json"));
    assert_eq!(model["version"], "scl-v1");
    assert!(d.join("scl/predictions.jsonl").is_file());

    let bad = rosetta(&[
        "scl",
        "--source",
        p(&d.join("source.jsonl")),
        "--target",
        p(&d.join("target.jsonl")),
        "--pivots",
        "5",
        "--dims",
        "10",
        "--output-dir",
        p(&d.join("scl")),
    ]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("config stage"));

    let out = rosetta(&[
        "ewc",
        "--task-a",
        p(&d.join("ewc_task_a.jsonl")),
        "--task-b",
        p(&d.join("ewc_task_b.jsonl")),
        "--seeds",
        "3",
        "--threads",
        "2",
        "--output-dir",
        p(&d.join("ewc")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(d.join("ewc/ewc_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let out = rosetta(&[
        "ewc",
        "--task-a",
        p(&d.join("ewc_task_a.jsonl")),
        "--task-b",
        p(&fixture("records/all_correct.jsonl")),
        "--output-dir",
        p(&d.join("ewc")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), 0.3);
    let d = dir.path();
    for threads in ["1", "4"] {
        let out = rosetta(&[
            "scl",
            "--source",
            p(&d.join("source.jsonl")),
            "--target",
            p(&d.join("target.jsonl")),
            "--pivots",
            "20",
            "--dims",
            "5",
            "--threads",
            threads,
            "--output-dir",
            p(&d.join(format!("t{threads}"))),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(d.join("t1/scl_model.json")).unwrap(),
        std::fs::read(d.join("t4/scl_model.json")).unwrap()
    );
}
