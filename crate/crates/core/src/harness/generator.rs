//! Synthetic two-domain corpora, task files and an interfering EWC task pair.
//!
//! Each token of a document is drawn from one of three pools:
//!
//! * the domain's exclusive vocabulary, with probability `occupancy`
//!   (`srcpos*`/`srcneg*` in the specialized domain, `tgtpos*`/`tgtneg*` in
//!   the general one),
//! * the shared pivot vocabulary (`pivpos*`/`pivneg*`), with probability
//!   `pivot_rate`,
//! * the shared filler vocabulary (`fill*`) otherwise.
//!
//! Exclusive and pivot draws are class-conditional: with probability
//! `label_strength` the token comes from the half of the pool that belongs
//! to the document's label, otherwise uniformly from the whole pool.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::continual::{LabeledExample, TaskData};
use crate::corpus::{write_documents, Document};
use crate::error::{Error, Result};
use crate::harness::manifest::{Grading, SegmentSpec, SuiteManifest, TaskItem, TaskSpec};
use crate::jsonl;
use crate::metrics::{GENERAL, SPECIALIZED};

pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Training documents per domain.
    pub n_docs: usize,
    /// Held-out labeled documents per domain.
    pub n_eval_docs: usize,
    pub pivot_vocab: usize,
    /// Exclusive vocabulary size of each domain.
    pub specialized_vocab: usize,
    pub filler_vocab: usize,
    /// Share of specialized-domain tokens drawn from its exclusive vocabulary.
    pub specialized_token_occupancy: f64,
    /// Same, for the general domain.
    pub general_token_occupancy: f64,
    pub pivot_rate: f64,
    pub label_strength: f64,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    /// Share of specialized documents in the balanced corpus.
    pub stratified_mix_ratio: f64,
    /// Items per segment of the transition task.
    pub transition_items: usize,
    pub ewc_dim: usize,
    pub ewc_examples: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_docs: 1000,
            n_eval_docs: 400,
            pivot_vocab: 40,
            specialized_vocab: 60,
            filler_vocab: 200,
            specialized_token_occupancy: 0.3,
            general_token_occupancy: 0.3,
            pivot_rate: 0.03,
            label_strength: 0.8,
            min_doc_len: 20,
            max_doc_len: 40,
            stratified_mix_ratio: 0.5,
            transition_items: 50,
            ewc_dim: 10,
            ewc_examples: 500,
            seed: 42,
        }
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("specialized_token_occupancy", self.specialized_token_occupancy),
            ("general_token_occupancy", self.general_token_occupancy),
            ("pivot_rate", self.pivot_rate),
            ("label_strength", self.label_strength),
            ("stratified_mix_ratio", self.stratified_mix_ratio),
        ] {
            check_probability(name, v)?;
        }
        for (name, occ) in [
            ("specialized_token_occupancy", self.specialized_token_occupancy),
            ("general_token_occupancy", self.general_token_occupancy),
        ] {
            if occ + self.pivot_rate > 1.0 {
                return Err(Error::validation(format!("{name} + pivot_rate exceeds 1")));
            }
        }
        for (name, n) in [
            ("n_docs", self.n_docs),
            ("n_eval_docs", self.n_eval_docs),
            ("transition_items", self.transition_items),
        ] {
            if n < 2 {
                return Err(Error::validation(format!("{name} must be at least 2, got {n}")));
            }
        }
        for (name, n) in [
            ("pivot_vocab", self.pivot_vocab),
            ("specialized_vocab", self.specialized_vocab),
        ] {
            if n < 2 {
                return Err(Error::validation(format!(
                    "{name} must hold at least one token per class, got {n}"
                )));
            }
        }
        if self.filler_vocab == 0 {
            return Err(Error::validation("filler_vocab is empty"));
        }
        if self.min_doc_len == 0 || self.min_doc_len > self.max_doc_len {
            return Err(Error::validation(format!(
                "document length range {}..={} is empty",
                self.min_doc_len, self.max_doc_len
            )));
        }
        if self.ewc_dim < 2 {
            return Err(Error::validation("ewc_dim must be at least 2"));
        }
        if self.ewc_examples < 10 {
            return Err(Error::validation("ewc_examples must be at least 10"));
        }
        Ok(())
    }
}

/// A label-split vocabulary: `{prefix}pos{i}` and `{prefix}neg{i}`.
struct Pool {
    pos: Vec<String>,
    neg: Vec<String>,
}

impl Pool {
    fn new(prefix: &str, size: usize) -> Self {
        let n_pos = size.div_ceil(2);
        Pool {
            pos: (0..n_pos).map(|i| format!("{prefix}pos{i}")).collect(),
            neg: (0..size - n_pos).map(|i| format!("{prefix}neg{i}")).collect(),
        }
    }

    fn draw<'a>(&'a self, rng: &mut ChaCha8Rng, positive: bool, strength: f64) -> &'a str {
        if rng.random_bool(strength) {
            let half = if positive { &self.pos } else { &self.neg };
            &half[rng.random_range(0..half.len())]
        } else {
            let i = rng.random_range(0..self.pos.len() + self.neg.len());
            if i < self.pos.len() {
                &self.pos[i]
            } else {
                &self.neg[i - self.pos.len()]
            }
        }
    }
}

struct Domain<'a> {
    tag: &'static str,
    exclusive: &'a Pool,
    occupancy: f64,
}

struct Vocab {
    pivots: Pool,
    source: Pool,
    target: Pool,
    filler: Vec<String>,
}

impl Vocab {
    fn new(cfg: &GeneratorConfig) -> Self {
        Vocab {
            pivots: Pool::new("piv", cfg.pivot_vocab),
            source: Pool::new("src", cfg.specialized_vocab),
            target: Pool::new("tgt", cfg.specialized_vocab),
            filler: (0..cfg.filler_vocab).map(|i| format!("fill{i}")).collect(),
        }
    }

    fn specialized(&self, cfg: &GeneratorConfig) -> Domain<'_> {
        Domain { tag: SPECIALIZED, exclusive: &self.source, occupancy: cfg.specialized_token_occupancy }
    }

    fn general(&self, cfg: &GeneratorConfig) -> Domain<'_> {
        Domain { tag: GENERAL, exclusive: &self.target, occupancy: cfg.general_token_occupancy }
    }
}

fn label_for(i: usize) -> &'static str {
    if i.is_multiple_of(2) {
        POSITIVE
    } else {
        NEGATIVE
    }
}

fn sample_docs(
    cfg: &GeneratorConfig,
    vocab: &Vocab,
    domain: &Domain,
    id_prefix: &str,
    n: usize,
    stream: u64,
) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    (0..n)
        .map(|i| {
            let label = label_for(i);
            let positive = label == POSITIVE;
            let len = rng.random_range(cfg.min_doc_len..=cfg.max_doc_len);
            let tokens: Vec<&str> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < domain.occupancy {
                        domain.exclusive.draw(&mut rng, positive, cfg.label_strength)
                    } else if u < domain.occupancy + cfg.pivot_rate {
                        vocab.pivots.draw(&mut rng, positive, cfg.label_strength)
                    } else {
                        &vocab.filler[rng.random_range(0..vocab.filler.len())]
                    }
                })
                .collect();
            Document::new(format!("{id_prefix}-{i:05}"), tokens.join(" "))
                .with_label(label)
                .with_domain(domain.tag)
        })
        .collect()
}

fn to_items(docs: &[Document]) -> Vec<TaskItem> {
    docs.iter()
        .map(|d| TaskItem {
            item_id: d.id.clone(),
            prompt: d.text.clone(),
            expected: d.label.clone().expect("generated documents are labeled"),
        })
        .collect()
}

/// Everything the generator produces, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub config: GeneratorConfig,
    /// Labeled specialized-domain training corpus.
    pub source: Vec<Document>,
    /// General-domain training corpus. Labels are kept for scoring only.
    pub target: Vec<Document>,
    pub source_eval: Vec<Document>,
    pub target_eval: Vec<Document>,
    /// Stratified blend of both training corpora.
    pub balanced: Vec<Document>,
    pub transition_specialized: Vec<Document>,
    pub transition_general: Vec<Document>,
    pub ewc_task_a: TaskData,
    pub ewc_task_b: TaskData,
}

pub const SUITE_ID: &str = "rosetta-synthetic";

/// File names written by [`SyntheticData::write`].
pub mod files {
    pub const SOURCE: &str = "source.jsonl";
    pub const TARGET: &str = "target.jsonl";
    pub const SOURCE_EVAL: &str = "source_eval.jsonl";
    pub const TARGET_EVAL: &str = "target_eval.jsonl";
    pub const BALANCED: &str = "balanced.jsonl";
    pub const ITEMS_SPECIALIZED: &str = "items_specialized.jsonl";
    pub const ITEMS_GENERAL: &str = "items_general.jsonl";
    pub const TRANSITION_SPECIALIZED: &str = "transition_specialized.jsonl";
    pub const TRANSITION_GENERAL: &str = "transition_general.jsonl";
    pub const MANIFEST: &str = "suite.json";
    pub const EWC_TASK_A: &str = "ewc_task_a.jsonl";
    pub const EWC_TASK_B: &str = "ewc_task_b.jsonl";
    pub const CONFIG: &str = "generator_config.json";
}

pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let vocab = Vocab::new(cfg);
    let spec = vocab.specialized(cfg);
    let gen = vocab.general(cfg);

    let source = sample_docs(cfg, &vocab, &spec, "src", cfg.n_docs, 1);
    let target = sample_docs(cfg, &vocab, &gen, "tgt", cfg.n_docs, 2);
    let source_eval = sample_docs(cfg, &vocab, &spec, "src-eval", cfg.n_eval_docs, 3);
    let target_eval = sample_docs(cfg, &vocab, &gen, "tgt-eval", cfg.n_eval_docs, 4);
    let transition_specialized =
        sample_docs(cfg, &vocab, &spec, "trans-spec", cfg.transition_items, 5);
    let transition_general = sample_docs(cfg, &vocab, &gen, "trans-gen", cfg.transition_items, 6);

    // Label order alternates, so any prefix of either corpus stays balanced.
    let n_spec = (cfg.n_docs as f64 * cfg.stratified_mix_ratio).round() as usize;
    let mut balanced: Vec<Document> = source[..n_spec]
        .iter()
        .chain(&target[..cfg.n_docs - n_spec])
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    balanced.shuffle(&mut rng);

    let (ewc_task_a, ewc_task_b) = interfering_tasks(cfg.ewc_dim, cfg.ewc_examples, cfg.seed)?;
    Ok(SyntheticData {
        config: cfg.clone(),
        source,
        target,
        source_eval,
        target_eval,
        balanced,
        transition_specialized,
        transition_general,
        ewc_task_a,
        ewc_task_b,
    })
}

impl SyntheticData {
    /// The suite over the written item files, with paths relative to `dir`.
    pub fn manifest(&self) -> SuiteManifest {
        let single = |id: &str, tag: &str, file: &str| TaskSpec::Single {
            task_id: id.to_string(),
            domain_tag: tag.to_string(),
            data_ref: PathBuf::from(file),
            grading: Grading::ExactMatch,
        };
        SuiteManifest {
            suite_id: SUITE_ID.to_string(),
            tasks: vec![
                single("specialized-eval", SPECIALIZED, files::ITEMS_SPECIALIZED),
                single("general-eval", GENERAL, files::ITEMS_GENERAL),
                TaskSpec::Transition {
                    task_id: "specialized-to-general".to_string(),
                    segments: vec![
                        SegmentSpec {
                            domain_tag: SPECIALIZED.to_string(),
                            data_ref: PathBuf::from(files::TRANSITION_SPECIALIZED),
                        },
                        SegmentSpec {
                            domain_tag: GENERAL.to_string(),
                            data_ref: PathBuf::from(files::TRANSITION_GENERAL),
                        },
                    ],
                    grading: Grading::ExactMatch,
                },
            ],
            baselines: None,
        }
    }

    /// Write every output under `dir` and return the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write_documents(&dir.join(files::SOURCE), &self.source)?;
        write_documents(&dir.join(files::TARGET), &self.target)?;
        write_documents(&dir.join(files::SOURCE_EVAL), &self.source_eval)?;
        write_documents(&dir.join(files::TARGET_EVAL), &self.target_eval)?;
        write_documents(&dir.join(files::BALANCED), &self.balanced)?;
        jsonl::write_jsonl(&dir.join(files::ITEMS_SPECIALIZED), &to_items(&self.source_eval))?;
        jsonl::write_jsonl(&dir.join(files::ITEMS_GENERAL), &to_items(&self.target_eval))?;
        jsonl::write_jsonl(
            &dir.join(files::TRANSITION_SPECIALIZED),
            &to_items(&self.transition_specialized),
        )?;
        jsonl::write_jsonl(
            &dir.join(files::TRANSITION_GENERAL),
            &to_items(&self.transition_general),
        )?;
        self.ewc_task_a.write(&dir.join(files::EWC_TASK_A))?;
        self.ewc_task_b.write(&dir.join(files::EWC_TASK_B))?;
        jsonl::write_json(&dir.join(files::CONFIG), &self.config)?;
        let manifest_path = dir.join(files::MANIFEST);
        jsonl::write_json(&manifest_path, &self.manifest())?;
        Ok(manifest_path)
    }

    /// Every task item in the suite, in manifest order.
    pub fn all_items(&self) -> Vec<TaskItem> {
        [&self.source_eval, &self.target_eval, &self.transition_specialized, &self.transition_general]
            .into_iter()
            .flat_map(|d| to_items(d))
            .collect()
    }
}

fn rescale(v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x * norm / n).collect()
}

/// Norm of task A's weights, and the part of it on shared features.
const TASK_A_NORM: f64 = 4.0;
const TASK_A_SHARED: f64 = 0.7;
/// Norm of task B's private weights. Larger than A's shared part, so B stays
/// learnable when the shared weights are held at A's values.
const TASK_B_PRIVATE_NORM: f64 = 6.0;

/// Two logistic tasks over the same feature space. The first half of the
/// features is shared and the tasks' weights there are exact opposites. The
/// rest splits into features private to A and private to B; each task's
/// inputs are zero on the other task's private features.
pub fn interfering_tasks(dim: usize, n: usize, seed: u64) -> Result<(TaskData, TaskData)> {
    if dim < 2 {
        return Err(Error::validation("interfering tasks need dimension ≥ 2"));
    }
    if n < 2 {
        return Err(Error::validation("interfering tasks need ≥ 2 examples"));
    }
    let shared = dim / 2;
    let a_end = shared + (dim - shared) / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(8);
    let mut normals = |len: usize, norm: f64| -> Vec<f64> {
        rescale((0..len).map(|_| StandardNormal.sample(&mut rng)).collect(), norm)
    };
    let w_shared = normals(shared, TASK_A_NORM * TASK_A_SHARED);
    let a_private = normals(a_end - shared, TASK_A_NORM * (1.0 - TASK_A_SHARED.powi(2)).sqrt());
    let b_private = normals(dim - a_end, TASK_B_PRIVATE_NORM);

    let mut w_a = vec![0.0; dim];
    let mut w_b = vec![0.0; dim];
    for (i, w) in w_shared.iter().enumerate() {
        w_a[i] = *w;
        w_b[i] = -w;
    }
    w_a[shared..a_end].copy_from_slice(&a_private);
    w_b[a_end..].copy_from_slice(&b_private);

    let mut sample = |w: &[f64], active: &dyn Fn(usize) -> bool| -> Result<TaskData> {
        let examples: Vec<LabeledExample> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..dim)
                    .map(|i| if active(i) { StandardNormal.sample(&mut rng) } else { 0.0 })
                    .collect();
                let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                let y = rng.random_bool(crate::scl::logistic::sigmoid(z)) as u8;
                LabeledExample { x, y }
            })
            .collect();
        TaskData::from_examples(&examples)
    };
    let a = sample(&w_a, &|i| i < a_end)?;
    let b = sample(&w_b, &|i| i < shared || i >= a_end)?;
    Ok((a, b))
}
