//! End-to-end run on generated data: a source-only classifier against an
//! SCL-adapted one, both scored through the benchmark suite, plus the two
//! EWC arms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::{run_sequential_experiment, SequentialRunResult};
use crate::corpus::{build_term_stats, dsi, Document, SpecializationParams};
use crate::error::Result;
use crate::harness::adapter::{Adapter, OfflineAdapter, Prediction};
use crate::harness::generator::{generate_synthetic, GeneratorConfig, SyntheticData};
use crate::harness::manifest::load_manifest;
use crate::harness::report::{emit_report, ReportFormat};
use crate::harness::runner::run_suite;
use crate::jsonl;
use crate::metrics::{aggregate_report, MetricsReport};
use crate::par::{self, Execution};
use crate::scl::{fit_source_only, scl_fit_with, DocClassifier, SclConfig};

pub const EWC_LAMBDA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub baseline: MetricsReport,
    pub scl: MetricsReport,
    pub ewc_plain: SequentialRunResult,
    pub ewc_penalized: SequentialRunResult,
}

/// Predict every suite item with `model`, treating each prompt as a document.
pub fn predict_items(
    exec: Execution,
    model: &(impl DocClassifier + Sync),
    data: &SyntheticData,
) -> Vec<Prediction> {
    par::map(exec, &data.all_items(), |item| Prediction {
        task_id: None,
        item_id: item.item_id.clone(),
        answer: model
            .predict_label(&Document::new(item.item_id.clone(), item.prompt.clone()))
            .to_string(),
        latency_seconds: None,
    })
}

fn score_arm(
    name: &str,
    predictions: Vec<Prediction>,
    manifest_path: &Path,
    dsi: f64,
    dir: &Path,
) -> Result<MetricsReport> {
    let arm_dir = dir.join(name);
    jsonl::write_jsonl(&arm_dir.join("predictions.jsonl"), &predictions)?;
    let manifest = load_manifest(manifest_path)?;
    let mut adapter = Adapter::Offline(OfflineAdapter::from_predictions(predictions));
    let run = run_suite(&manifest, &mut adapter)?;
    let report = aggregate_report(&run.records, &run.transitions, Some(dsi))?;
    emit_report(&report, Some(&run.records), ReportFormat::Json, &arm_dir)?;
    Ok(report)
}

/// Generate data into `dir`, train both arms, score them, and run EWC at
/// λ = 0 and λ = [`EWC_LAMBDA`].
pub fn run_demo(
    cfg: &GeneratorConfig,
    scl_cfg: &SclConfig,
    exec: Execution,
    dir: &Path,
) -> Result<DemoOutcome> {
    let data = generate_synthetic(cfg)?;
    let manifest_path = data.write(dir)?;
    let dsi = dsi(&data.source, &build_term_stats(&data.target)?, &SpecializationParams::default())?.dsi;

    let baseline = fit_source_only(&data.source, &data.target, &scl_cfg.hyper)?;
    let baseline_report =
        score_arm("baseline", predict_items(exec, &baseline, &data), &manifest_path, dsi, dir)?;

    let model = scl_fit_with(exec, &data.source, &data.target, scl_cfg)?;
    std::fs::write(dir.join("scl_model.json"), model.to_json())
        .map_err(|e| crate::error::Error::io(dir.join("scl_model.json"), e))?;
    let scl_report = score_arm("scl", predict_items(exec, &model, &data), &manifest_path, dsi, dir)?;

    let ewc = |lambda| {
        run_sequential_experiment(&data.ewc_task_a, &data.ewc_task_b, lambda, &scl_cfg.hyper, cfg.seed)
    };
    let outcome = DemoOutcome {
        baseline: baseline_report,
        scl: scl_report,
        ewc_plain: ewc(0.0)?,
        ewc_penalized: ewc(EWC_LAMBDA)?,
    };
    jsonl::write_json(&dir.join("demo.json"), &outcome)?;
    Ok(outcome)
}
