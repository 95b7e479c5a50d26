use std::path::{Path, PathBuf};
use std::time::Duration;

use rosetta::harness::adapter::{Adapter, AdapterSpec, OfflineAdapter, SubprocessAdapter};
use rosetta::harness::manifest::{load_manifest, TaskItem};
use rosetta::harness::report::{emit_report, ReportFormat, RECORDS, REPORT_JSON};
use rosetta::harness::runner::run_suite;
use rosetta::jsonl;
use rosetta::metrics::aggregate_report;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn offline(predictions: &str) -> Adapter {
    Adapter::Offline(OfflineAdapter::load(&fixture("small_suite").join(predictions)).unwrap())
}

#[test]
fn offline_fixture_matches_hand_grading() {
    let manifest = load_manifest(&fixture("small_suite/suite.json")).unwrap();
    let run = run_suite(&manifest, &mut offline("predictions.jsonl")).unwrap();
    assert_eq!(run.records.len(), 12);

    let flag = |id: &str| {
        let r = run.records.iter().find(|r| r.item_id.as_deref() == Some(id)).unwrap();
        (r.correct, r.flag.clone())
    };
    assert_eq!(flag("s1"), (true, None));
    assert_eq!(flag("s4"), (false, None));
    assert_eq!(flag("g3"), (false, Some("missing".into())));

    let t = &run.transitions[0];
    assert_eq!(t.sequence_id, "switch");
    let accs: Vec<f64> = t.segment_accuracies.iter().map(|s| s.accuracy).collect();
    assert_eq!(accs, vec![1.0, 0.5]);

    let report = aggregate_report(&run.records, &run.transitions, None).unwrap();
    assert!((report.accuracy_specialized - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(report.accuracy_general, 0.5);
    assert!((report.pim - 0.25).abs() < 1e-15);
    // general segment after the switch: 0.5 against a 0.8 baseline
    assert!((report.cdcs.unwrap() - 0.625).abs() < 1e-15);
    assert!((report.ars.unwrap() - 0.625).abs() < 1e-15);
    // every specialized item carries a latency: (0.5 + 0.25 + 0.25 + 1 + 0.5 + 0.5) / 6
    assert!((report.mean_latency_by_domain["specialized"] - 0.5).abs() < 1e-15);
}

#[test]
fn perfect_predictions_score_one() {
    let manifest = load_manifest(&fixture("small_suite/suite.json")).unwrap();
    let run = run_suite(&manifest, &mut offline("predictions_perfect.jsonl")).unwrap();
    let report = aggregate_report(&run.records, &run.transitions, None).unwrap();
    assert_eq!((report.accuracy_specialized, report.accuracy_general, report.pim), (1.0, 1.0, 0.0));
}

#[test]
fn baselines_default_to_single_task_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture("small_suite")).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let mut m: Value = jsonl::read_json(&dir.path().join("suite.json")).unwrap();
    m.as_object_mut().unwrap().remove("baselines");
    jsonl::write_json(&dir.path().join("suite.json"), &m).unwrap();

    let manifest = load_manifest(&dir.path().join("suite.json")).unwrap();
    let run = run_suite(&manifest, &mut offline("predictions.jsonl")).unwrap();
    let base = &run.transitions[0].baseline_accuracy_by_domain;
    assert_eq!(base["specialized"], 0.75);
    assert_eq!(base["general"], 0.5);
}

fn strip_latency(v: &mut Value) {
    if let Some(obj) = v.as_object_mut() {
        obj.remove("latency");
        obj.remove("mean_latency_by_domain");
    }
}

fn report_bytes_without_latency(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let mut report: Value = jsonl::read_json(&dir.join(REPORT_JSON)).unwrap();
    strip_latency(&mut report);
    let mut records: Vec<Value> = jsonl::read_jsonl(&dir.join(RECORDS)).unwrap();
    records.iter_mut().for_each(strip_latency);
    (
        serde_json::to_vec_pretty(&report).unwrap(),
        serde_json::to_vec(&records).unwrap(),
    )
}

#[test]
fn offline_runs_are_byte_identical_apart_from_latency() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let manifest = load_manifest(&fixture("small_suite/suite.json")).unwrap();
        let run = run_suite(&manifest, &mut offline("predictions.jsonl")).unwrap();
        let report = aggregate_report(&run.records, &run.transitions, Some(0.3)).unwrap();
        emit_report(&report, Some(&run.records), ReportFormat::Json, d.path()).unwrap();
    }
    assert_eq!(report_bytes_without_latency(dirs[0].path()), report_bytes_without_latency(dirs[1].path()));
}

fn write_items(dir: &Path, n: usize) -> PathBuf {
    let items: Vec<TaskItem> = (0..n)
        .map(|i| TaskItem {
            item_id: format!("e{i:03}"),
            prompt: format!("Echo   me {i}"),
            expected: format!("echo me {i}"),
        })
        .collect();
    let half = n / 2;
    jsonl::write_jsonl(&dir.join("spec.jsonl"), &items[..half]).unwrap();
    jsonl::write_jsonl(&dir.join("gen.jsonl"), &items[half..]).unwrap();
    let manifest = serde_json::json!({
        "suite_id": "echo",
        "tasks": [
            {"kind": "single", "task_id": "a", "domain_tag": "specialized", "data_ref": "spec.jsonl"},
            {"kind": "single", "task_id": "b", "domain_tag": "general", "data_ref": "gen.jsonl"}
        ]
    });
    let path = dir.join("suite.json");
    jsonl::write_json(&path, &manifest).unwrap();
    path
}

#[test]
fn echo_subprocess_round_trips_100_items() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(&write_items(dir.path(), 100)).unwrap();
    let spec = AdapterSpec::Subprocess {
        command: vec![env!("CARGO_BIN_EXE_rosetta-echo-adapter").to_string()],
        timeout_seconds: 10.0,
    };
    let run = run_suite(&manifest, &mut spec.connect().unwrap()).unwrap();
    assert_eq!(run.records.len(), 100);
    assert!(run.records.iter().all(|r| r.correct && r.flag.is_none()));
}

fn sh(script: &str, timeout: Duration) -> Adapter {
    let cmd = ["sh", "-c", script].map(String::from);
    Adapter::Subprocess(SubprocessAdapter::spawn(&cmd, timeout).unwrap())
}

#[test]
fn silent_child_times_out_per_item_and_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(&write_items(dir.path(), 4)).unwrap();
    let run = run_suite(&manifest, &mut sh("while read l; do sleep 10; done", Duration::from_millis(200))).unwrap();
    assert_eq!(run.records.len(), 4);
    assert!(run.records.iter().all(|r| !r.correct && r.flag.as_deref() == Some("timeout")));
    assert!(run.records.iter().all(|r| r.latency >= 0.19));
}

#[test]
fn malformed_child_output_aborts_naming_item() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(&write_items(dir.path(), 4)).unwrap();
    let err = run_suite(&manifest, &mut sh("while read l; do echo '{oops'; done", Duration::from_secs(5)))
        .unwrap_err();
    assert!(!err.is_validation());
    assert!(err.to_string().contains("e000"), "{err}");
}
