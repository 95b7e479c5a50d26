//! Suite manifests and task item files.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Grading rule for a task. Only normalized exact match exists in v1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    #[default]
    ExactMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub domain_tag: String,
    pub data_ref: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Single {
        task_id: String,
        domain_tag: String,
        data_ref: PathBuf,
        #[serde(default)]
        grading: Grading,
    },
    Transition {
        task_id: String,
        segments: Vec<SegmentSpec>,
        #[serde(default)]
        grading: Grading,
    },
}

impl TaskSpec {
    pub fn task_id(&self) -> &str {
        match self {
            TaskSpec::Single { task_id, .. } | TaskSpec::Transition { task_id, .. } => task_id,
        }
    }

    fn data_refs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            TaskSpec::Single { data_ref, .. } => vec![data_ref],
            TaskSpec::Transition { segments, .. } => {
                segments.iter_mut().map(|s| &mut s.data_ref).collect()
            }
        }
    }
}

/// A benchmark suite: specialized, general and transition tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub suite_id: String,
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskItem {
    pub item_id: String,
    pub prompt: String,
    pub expected: String,
}

impl SuiteManifest {
    pub fn validate(&self) -> Result<()> {
        if self.suite_id.is_empty() {
            return Err(Error::validation("suite_id must be non-empty"));
        }
        let mut seen = HashSet::new();
        for task in &self.tasks {
            if task.task_id().is_empty() {
                return Err(Error::validation("task with empty task_id"));
            }
            if !seen.insert(task.task_id()) {
                return Err(Error::validation(format!(
                    "duplicate task_id {:?}",
                    task.task_id()
                )));
            }
            match task {
                TaskSpec::Single { domain_tag, .. } if domain_tag.is_empty() => {
                    return Err(Error::validation(format!(
                        "task {:?} has an empty domain_tag",
                        task.task_id()
                    )));
                }
                TaskSpec::Transition { segments, .. } if segments.len() < 2 => {
                    return Err(Error::validation(format!(
                        "transition task {:?} needs ≥ 2 segments, has {}",
                        task.task_id(),
                        segments.len()
                    )));
                }
                _ => {}
            }
        }
        for (tag, v) in self.baselines.iter().flatten() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::validation(format!(
                    "baseline for {tag:?} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Parse and validate a manifest, resolving every `data_ref` against the
/// manifest's directory and checking that the file exists.
pub fn load_manifest(path: &Path) -> Result<SuiteManifest> {
    let mut manifest: SuiteManifest = jsonl::read_json(path)?;
    manifest.validate()?;
    let base = path.parent().unwrap_or(Path::new(""));
    for task in &mut manifest.tasks {
        for data_ref in task.data_refs_mut() {
            let resolved = base.join(&*data_ref);
            if !resolved.is_file() {
                return Err(Error::validation(format!(
                    "data file {} does not exist",
                    resolved.display()
                )));
            }
            *data_ref = resolved;
        }
    }
    Ok(manifest)
}

/// Read a task item file, enforcing unique ids and non-empty answers.
pub fn read_items(path: &Path) -> Result<Vec<TaskItem>> {
    let items: Vec<TaskItem> = jsonl::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for item in &items {
        if !seen.insert(item.item_id.as_str()) {
            return Err(Error::validation(format!(
                "{}: duplicate item_id {:?}",
                path.display(),
                item.item_id
            )));
        }
        if item.expected.is_empty() {
            return Err(Error::validation(format!(
                "{}: item {:?} has an empty expected answer",
                path.display(),
                item.item_id
            )));
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_manifest_loads_with_resolved_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "items.jsonl", "{\"item_id\":\"a\",\"prompt\":\"p\",\"expected\":\"x\"}\n");
        let m = write(
            dir.path(),
            "suite.json",
            r#"{"suite_id":"s","tasks":[{"kind":"single","task_id":"t","domain_tag":"general","data_ref":"items.jsonl"}]}"#,
        );
        let manifest = load_manifest(&m).unwrap();
        match &manifest.tasks[0] {
            TaskSpec::Single { data_ref, grading, .. } => {
                assert_eq!(data_ref, &dir.path().join("items.jsonl"));
                assert_eq!(*grading, Grading::ExactMatch);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_segment_transition_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "items.jsonl", "");
        let m = write(
            dir.path(),
            "suite.json",
            r#"{"suite_id":"s","tasks":[{"kind":"transition","task_id":"t","segments":[{"domain_tag":"general","data_ref":"items.jsonl"}]}]}"#,
        );
        let err = load_manifest(&m).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("≥ 2 segments"));
    }

    #[test]
    fn dangling_data_ref_named() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "suite.json",
            r#"{"suite_id":"s","tasks":[{"kind":"single","task_id":"t","domain_tag":"general","data_ref":"nope.jsonl"}]}"#,
        );
        let err = load_manifest(&m).unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"), "{err}");
    }

    #[test]
    fn duplicate_task_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "i.jsonl", "");
        let m = write(
            dir.path(),
            "dup.json",
            r#"{"suite_id":"s","tasks":[
                {"kind":"single","task_id":"t","domain_tag":"general","data_ref":"i.jsonl"},
                {"kind":"single","task_id":"t","domain_tag":"general","data_ref":"i.jsonl"}]}"#,
        );
        assert!(load_manifest(&m).unwrap_err().to_string().contains("\"t\""));

        let bad = write(dir.path(), "bad.json", "{\n\"suite_id\": \"s\",\n\"tasks\": [ {\"kind\": \"weird\"} ]\n}");
        match load_manifest(&bad).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn items_validated() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(
            dir.path(),
            "dup.jsonl",
            "{\"item_id\":\"a\",\"prompt\":\"p\",\"expected\":\"x\"}\n{\"item_id\":\"a\",\"prompt\":\"q\",\"expected\":\"y\"}\n",
        );
        assert!(read_items(&dup).unwrap_err().to_string().contains("\"a\""));
        let empty = write(dir.path(), "e.jsonl", "{\"item_id\":\"a\",\"prompt\":\"p\",\"expected\":\"\"}\n");
        assert!(read_items(&empty).is_err());
    }
}
