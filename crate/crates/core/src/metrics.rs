//! Accuracy, PIM, CDCS and ARS over graded outcomes, plus report aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const SPECIALIZED: &str = "specialized";
pub const GENERAL: &str = "general";

/// One graded answer on one task item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub domain_tag: String,
    pub correct: bool,
    /// Seconds.
    pub latency: f64,
    pub suite_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    /// Grading flag such as `"timeout"` or `"missing"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl EvaluationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.domain_tag.is_empty() {
            return Err(Error::validation(format!(
                "record for task {:?} has an empty domain_tag",
                self.task_id
            )));
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err(Error::validation(format!(
                "record for task {:?} has invalid latency {}",
                self.task_id, self.latency
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub domain_tag: String,
    pub accuracy: f64,
}

/// Per-segment accuracies of one cross-domain transition sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub sequence_id: String,
    pub segment_accuracies: Vec<Segment>,
    pub baseline_accuracy_by_domain: BTreeMap<String, f64>,
}

impl TransitionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.segment_accuracies.len() < 2 {
            return Err(Error::validation(format!(
                "transition {:?} needs ≥ 2 segments, has {}",
                self.sequence_id,
                self.segment_accuracies.len()
            )));
        }
        let accs = self
            .segment_accuracies
            .iter()
            .map(|s| s.accuracy)
            .chain(self.baseline_accuracy_by_domain.values().copied());
        for a in accs {
            check_unit("accuracy", a)?;
        }
        Ok(())
    }

    /// Baseline for the segment's tag, or an error naming the tag.
    fn baseline(&self, tag: &str) -> Result<f64> {
        self.baseline_accuracy_by_domain
            .get(tag)
            .copied()
            .ok_or_else(|| {
                Error::validation(format!(
                    "transition {:?}: no baseline accuracy for domain {:?}",
                    self.sequence_id, tag
                ))
            })
    }
}

pub fn read_records(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let records: Vec<EvaluationRecord> = jsonl::read_jsonl(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn read_transitions(path: &Path) -> Result<Vec<TransitionRecord>> {
    let transitions: Vec<TransitionRecord> = jsonl::read_json(path)?;
    for t in &transitions {
        t.validate()?;
    }
    Ok(transitions)
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must lie in [0, 1], got {v}")))
    }
}

/// Fraction of records tagged `domain_tag` that were graded correct.
pub fn accuracy(records: &[EvaluationRecord], domain_tag: &str) -> Result<f64> {
    let (n, correct) = records
        .iter()
        .filter(|r| r.domain_tag == domain_tag)
        .fold((0usize, 0usize), |(n, c), r| (n + 1, c + r.correct as usize));
    if n == 0 {
        return Err(Error::validation(format!(
            "no records match domain tag {domain_tag:?}"
        )));
    }
    Ok(correct as f64 / n as f64)
}

/// Performance inversion: `(spec - gen) / (spec + gen)`.
pub fn pim(acc_specialized: f64, acc_general: f64) -> Result<f64> {
    check_unit("specialized accuracy", acc_specialized)?;
    check_unit("general accuracy", acc_general)?;
    let total = acc_specialized + acc_general;
    if total == 0.0 {
        return Err(Error::validation(
            "PIM is undefined when both accuracies are zero",
        ));
    }
    Ok((acc_specialized - acc_general) / total)
}

/// Cross-domain consistency: post-transition accuracy over baseline accuracy.
pub fn cdcs(accuracy_after_transition: f64, baseline_accuracy: f64) -> Result<f64> {
    check_unit("post-transition accuracy", accuracy_after_transition)?;
    check_unit("baseline accuracy", baseline_accuracy)?;
    if baseline_accuracy == 0.0 {
        return Err(Error::validation(
            "CDCS is undefined for a zero baseline accuracy",
        ));
    }
    Ok(accuracy_after_transition / baseline_accuracy)
}

fn retention(observed: f64, baseline: f64, seq: &str) -> Result<f64> {
    if baseline == 0.0 {
        return if observed == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::validation(format!(
                "transition {seq:?}: segment accuracy {observed} against a zero baseline"
            )))
        };
    }
    Ok((observed / baseline).min(1.0))
}

/// Adaptive reasoning score: mean clamped retention over every segment after
/// the first, pooled across records.
pub fn ars(transitions: &[TransitionRecord]) -> Result<f64> {
    if transitions.is_empty() {
        return Err(Error::validation("ARS needs at least one transition record"));
    }
    let mut retentions = Vec::new();
    for t in transitions {
        t.validate()?;
        for seg in &t.segment_accuracies[1..] {
            let base = t.baseline(&seg.domain_tag)?;
            retentions.push(retention(seg.accuracy, base, &t.sequence_id)?);
        }
    }
    Ok(stable_mean(retentions))
}

/// Order-independent mean: values are summed in sorted order.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregated metrics for one evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy_specialized: f64,
    pub accuracy_general: f64,
    pub pim: f64,
    /// Mean post-transition accuracy over baseline, across transition segments
    /// with a nonzero baseline. Absent without transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdcs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ars: Option<f64>,
    pub mean_latency_by_domain: BTreeMap<String, f64>,
    pub n_records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsi: Option<f64>,
}

impl MetricsReport {
    /// `(name, value)` for every scalar metric present, in a fixed order.
    pub fn scalar_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("accuracy_specialized".to_string(), self.accuracy_specialized),
            ("accuracy_general".to_string(), self.accuracy_general),
            ("pim".to_string(), self.pim),
        ];
        if let Some(v) = self.cdcs {
            rows.push(("cdcs".into(), v));
        }
        if let Some(v) = self.ars {
            rows.push(("ars".into(), v));
        }
        for (tag, v) in &self.mean_latency_by_domain {
            rows.push((format!("mean_latency.{tag}"), *v));
        }
        rows.push(("n_records".into(), self.n_records as f64));
        if let Some(v) = self.dsi {
            rows.push(("dsi".into(), v));
        }
        rows
    }
}

fn mean_cdcs(transitions: &[TransitionRecord]) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    for t in transitions {
        for seg in &t.segment_accuracies[1..] {
            let base = t.baseline(&seg.domain_tag)?;
            if base > 0.0 {
                scores.push(cdcs(seg.accuracy, base)?);
            }
        }
    }
    Ok((!scores.is_empty()).then(|| stable_mean(scores)))
}

pub fn aggregate_report(
    records: &[EvaluationRecord],
    transitions: &[TransitionRecord],
    dsi: Option<f64>,
) -> Result<MetricsReport> {
    for r in records {
        r.validate()?;
    }
    let tags: BTreeSet<&str> = records.iter().map(|r| r.domain_tag.as_str()).collect();
    let missing: Vec<&str> = [SPECIALIZED, GENERAL]
        .into_iter()
        .filter(|t| !tags.contains(t))
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "records do not cover domain tag(s): {}",
            missing.join(", ")
        )));
    }
    if let Some(d) = dsi {
        check_unit("dsi", d)?;
    }

    let accuracy_specialized = accuracy(records, SPECIALIZED)?;
    let accuracy_general = accuracy(records, GENERAL)?;
    let pim = pim(accuracy_specialized, accuracy_general)?;

    let mut latencies: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        latencies.entry(r.domain_tag.clone()).or_default().push(r.latency);
    }
    let mean_latency_by_domain = latencies
        .into_iter()
        .map(|(tag, v)| (tag, stable_mean(v)))
        .collect();

    let (cdcs, ars) = if transitions.is_empty() {
        (None, None)
    } else {
        (mean_cdcs(transitions)?, Some(ars(transitions)?))
    };

    Ok(MetricsReport {
        accuracy_specialized,
        accuracy_general,
        pim,
        cdcs,
        ars,
        mean_latency_by_domain,
        n_records: records.len(),
        dsi,
    })
}
