//! Suite execution: ask the adapter, grade, time, and build transition records.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::adapter::{Adapter, Reply};
use crate::harness::manifest::{read_items, SuiteManifest, TaskItem, TaskSpec};
use crate::metrics::{EvaluationRecord, Segment, TransitionRecord};
use crate::par::{self, Execution};

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(answer: &str, expected: &str) -> bool {
    normalize_answer(answer) == normalize_answer(expected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub records: Vec<EvaluationRecord>,
    pub transitions: Vec<TransitionRecord>,
}

struct Graded {
    correct: bool,
    latency: f64,
    flag: Option<&'static str>,
}

fn grade(reply: Reply, expected: &str, measured: f64) -> Graded {
    match reply {
        Reply::Answer { text, latency } => Graded {
            correct: exact_match(&text, expected),
            latency: latency.unwrap_or(measured),
            flag: None,
        },
        Reply::Missing => Graded { correct: false, latency: measured, flag: Some("missing") },
        Reply::Timeout => Graded { correct: false, latency: measured, flag: Some("timeout") },
    }
}

fn answer_items(adapter: &mut Adapter, task_id: &str, items: &[TaskItem]) -> Result<Vec<Graded>> {
    match adapter {
        Adapter::Offline(offline) => Ok(par::map(Execution::default(), items, |item| {
            let start = Instant::now();
            let reply = offline.lookup(task_id, &item.item_id);
            grade(reply, &item.expected, start.elapsed().as_secs_f64())
        })),
        Adapter::Subprocess(child) => items
            .iter()
            .map(|item| {
                let start = Instant::now();
                let reply = child.ask(&item.item_id, &item.prompt)?;
                Ok(grade(reply, &item.expected, start.elapsed().as_secs_f64()))
            })
            .collect(),
    }
}

fn to_records(
    suite_id: &str,
    task_id: &str,
    domain_tag: &str,
    annotation: Option<String>,
    items: &[TaskItem],
    graded: Vec<Graded>,
) -> Vec<EvaluationRecord> {
    items
        .iter()
        .zip(graded)
        .map(|(item, g)| EvaluationRecord {
            task_id: task_id.to_string(),
            item_id: Some(item.item_id.clone()),
            domain_tag: domain_tag.to_string(),
            correct: g.correct,
            latency: g.latency,
            suite_id: suite_id.to_string(),
            annotation: annotation.clone(),
            flag: g.flag.map(str::to_string),
        })
        .collect()
}

fn fraction_correct(records: &[EvaluationRecord]) -> f64 {
    records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
}

/// Run every task of a loaded manifest. Each item yields exactly one record.
///
/// Transition baselines come from the manifest when given; otherwise each
/// domain's baseline is the accuracy of the suite's single tasks with that tag.
pub fn run_suite(manifest: &SuiteManifest, adapter: &mut Adapter) -> Result<SuiteRun> {
    let suite = manifest.suite_id.as_str();
    let mut records = Vec::new();
    let mut single_by_domain: BTreeMap<String, Vec<EvaluationRecord>> = BTreeMap::new();
    let mut segment_runs = Vec::new();

    for task in &manifest.tasks {
        match task {
            TaskSpec::Single { task_id, domain_tag, data_ref, .. } => {
                let items = read_items(data_ref)?;
                let graded = answer_items(adapter, task_id, &items)?;
                let recs = to_records(suite, task_id, domain_tag, None, &items, graded);
                single_by_domain.entry(domain_tag.clone()).or_default().extend(recs.iter().cloned());
                records.extend(recs);
            }
            TaskSpec::Transition { task_id, segments, .. } => {
                let mut accs = Vec::with_capacity(segments.len());
                for (i, seg) in segments.iter().enumerate() {
                    let items = read_items(&seg.data_ref)?;
                    if items.is_empty() {
                        return Err(Error::validation(format!(
                            "transition task {task_id:?}: segment {i} has no items"
                        )));
                    }
                    let graded = answer_items(adapter, task_id, &items)?;
                    let note = Some(format!("segment {i}"));
                    let recs = to_records(suite, task_id, &seg.domain_tag, note, &items, graded);
                    accs.push(Segment {
                        domain_tag: seg.domain_tag.clone(),
                        accuracy: fraction_correct(&recs),
                    });
                    records.extend(recs);
                }
                segment_runs.push((task_id.clone(), accs));
            }
        }
    }

    let baselines = match &manifest.baselines {
        Some(b) => b.clone(),
        None => single_by_domain
            .iter()
            .map(|(tag, recs)| (tag.clone(), fraction_correct(recs)))
            .collect(),
    };
    let transitions = segment_runs
        .into_iter()
        .map(|(sequence_id, segment_accuracies)| TransitionRecord {
            sequence_id,
            segment_accuracies,
            baseline_accuracy_by_domain: baselines.clone(),
        })
        .collect();
    Ok(SuiteRun { records, transitions })
}
