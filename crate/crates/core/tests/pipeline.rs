use rosetta::harness::demo::run_demo;
use rosetta::harness::generator::GeneratorConfig;
use rosetta::jsonl;
use rosetta::scl::SclConfig;
use rosetta::Execution;
use serde_json::Value;

#[test]
fn default_demo_has_inversion_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_demo(&GeneratorConfig::default(), &SclConfig::default(), Execution::Sequential, dir.path()).unwrap();
    assert!(out.baseline.pim > 0.0);
    assert!(out.scl.pim >= 0.0 && out.scl.pim < out.baseline.pim);
    assert!(out.scl.accuracy_general >= out.baseline.accuracy_general + 0.05);
    assert!(out.ewc_penalized.forgetting < out.ewc_plain.forgetting);

    let written: Value = jsonl::read_json(&dir.path().join("demo.json")).unwrap();
    assert_eq!(written["scl"]["pim"].as_f64(), Some(out.scl.pim));
    for arm in ["baseline", "scl"] {
        let report: Value = jsonl::read_json(&dir.path().join(arm).join("report.json")).unwrap();
        assert!(report["pim"].is_f64());
        assert!(dir.path().join(arm).join("predictions.jsonl").exists());
    }
    assert!(dir.path().join("scl_model.json").exists());
}
