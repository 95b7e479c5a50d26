//! Tokenization, term statistics and the Domain Specificity Index.
//!
//! A corpus is a list of [`Document`]s. [`build_term_stats`] aggregates token
//! counts; [`specialized_terms`] compares a target corpus against a general
//! reference with a smoothed frequency-ratio test; [`dsi`] reports the share
//! of target token occurrences that belong to specialized terms.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::par::{self, Execution};

/// One text unit of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub text: String,
    /// Class label. JSON strings, integers and booleans are all accepted and
    /// kept in their textual form.
    #[serde(
        default,
        deserialize_with = "label_from_scalar",
        skip_serializing_if = "Option::is_none"
    )]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            domain_tag: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_domain(mut self, tag: impl Into<String>) -> Self {
        self.domain_tag = Some(tag.into());
        self
    }
}

fn label_from_scalar<'de, D>(de: D) -> std::result::Result<Option<String>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Scalar {
        Str(String),
        Int(i64),
        Bool(bool),
    }
    Ok(Option::<Scalar>::deserialize(de)?.map(|s| match s {
        Scalar::Str(s) => s,
        Scalar::Int(i) => i.to_string(),
        Scalar::Bool(b) => b.to_string(),
    }))
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    jsonl::read_jsonl(path)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    jsonl::write_jsonl(path, docs)
}

/// Split text into lowercased maximal alphanumeric runs, keeping only runs
/// that contain at least one letter.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut has_letter = false;
    let mut flush = |current: &mut String, has_letter: &mut bool| {
        if *has_letter {
            tokens.push(std::mem::take(current));
        } else {
            current.clear();
        }
        *has_letter = false;
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            // Some lowercase mappings expand into combining marks; those are
            // dropped so the output re-tokenizes to itself.
            for lower in ch.to_lowercase().filter(|c| c.is_alphanumeric()) {
                has_letter |= lower.is_alphabetic();
                current.push(lower);
            }
        } else {
            flush(&mut current, &mut has_letter);
        }
    }
    flush(&mut current, &mut has_letter);
    tokens
}

/// Token frequency table for a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
    pub vocab_size: usize,
    pub doc_count: usize,
    pub doc_frequency: BTreeMap<String, u64>,
}

impl TermStats {
    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    fn merge(mut self, other: TermStats) -> TermStats {
        for (tok, c) in other.counts {
            *self.counts.entry(tok).or_insert(0) += c;
        }
        for (tok, c) in other.doc_frequency {
            *self.doc_frequency.entry(tok).or_insert(0) += c;
        }
        self.total_tokens += other.total_tokens;
        self.doc_count += other.doc_count;
        self.vocab_size = self.counts.len();
        self
    }

    fn from_document(doc: &Document) -> TermStats {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for tok in tokenize(&doc.text) {
            *counts.entry(tok).or_insert(0) += 1;
            total += 1;
        }
        let doc_frequency = counts.keys().map(|t| (t.clone(), 1)).collect();
        TermStats {
            vocab_size: counts.len(),
            counts,
            total_tokens: total,
            doc_count: 1,
            doc_frequency,
        }
    }
}

/// Reject empty or repeated document ids.
pub fn validate_ids(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if doc.id.is_empty() {
            return Err(Error::validation("document with empty id"));
        }
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::validation(format!(
                "duplicate document id {:?}",
                doc.id
            )));
        }
    }
    Ok(())
}

pub fn build_term_stats(docs: &[Document]) -> Result<TermStats> {
    build_term_stats_with(Execution::default(), docs)
}

/// [`build_term_stats`] with an explicit execution mode.
pub fn build_term_stats_with(exec: Execution, docs: &[Document]) -> Result<TermStats> {
    validate_ids(docs)?;
    let per_doc = par::map(exec, docs, TermStats::from_document);
    Ok(per_doc.into_iter().fold(TermStats::default(), TermStats::merge))
}

/// Thresholds for the specialized-term test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecializationParams {
    /// Minimum smoothed frequency ratio, target over reference. Must exceed 1.
    pub ratio_threshold: f64,
    /// Minimum raw count in the target corpus.
    pub min_count: u64,
    /// Additive smoothing applied to both corpora.
    pub smoothing: f64,
}

impl Default for SpecializationParams {
    fn default() -> Self {
        SpecializationParams {
            ratio_threshold: 5.0,
            min_count: 3,
            smoothing: 1.0,
        }
    }
}

impl SpecializationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_threshold.is_finite() && self.ratio_threshold > 1.0) {
            return Err(Error::validation(format!(
                "ratio_threshold must be a finite value > 1, got {}",
                self.ratio_threshold
            )));
        }
        if self.min_count < 1 {
            return Err(Error::validation("min_count must be >= 1"));
        }
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return Err(Error::validation(format!(
                "smoothing must be a finite value > 0, got {}",
                self.smoothing
            )));
        }
        Ok(())
    }
}

/// Smoothed relative-frequency ratio of `token` in `target` versus `reference`.
///
/// `union_vocab` is the size of the union of both vocabularies.
pub fn frequency_ratio(
    token: &str,
    target: &TermStats,
    reference: &TermStats,
    smoothing: f64,
    union_vocab: usize,
) -> f64 {
    let v = union_vocab as f64;
    let p_target =
        (target.count(token) as f64 + smoothing) / (target.total_tokens as f64 + smoothing * v);
    let p_ref = (reference.count(token) as f64 + smoothing)
        / (reference.total_tokens as f64 + smoothing * v);
    p_target / p_ref
}

fn union_vocab_size(a: &TermStats, b: &TermStats) -> usize {
    a.counts.len() + b.counts.keys().filter(|t| !a.counts.contains_key(*t)).count()
}

/// Tokens of `target` that clear both the count floor and the ratio test.
pub fn specialized_terms(
    target: &TermStats,
    reference: &TermStats,
    params: &SpecializationParams,
) -> Result<BTreeSet<String>> {
    params.validate()?;
    if target.total_tokens == 0 {
        return Err(Error::validation("target corpus has zero tokens"));
    }
    if reference.total_tokens == 0 {
        return Err(Error::validation("reference corpus has zero tokens"));
    }
    let v = union_vocab_size(target, reference);
    Ok(target
        .counts
        .iter()
        .filter(|(tok, &c)| {
            c >= params.min_count
                && frequency_ratio(tok, target, reference, params.smoothing, v)
                    >= params.ratio_threshold
        })
        .map(|(tok, _)| tok.clone())
        .collect())
}

/// Outcome of a DSI computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiResult {
    pub dsi: f64,
    pub specialized_terms: BTreeSet<String>,
    pub specialized_token_occurrences: u64,
    pub total_tokens: u64,
}

/// Share of target token occurrences that belong to specialized terms.
pub fn dsi(
    target_docs: &[Document],
    reference: &TermStats,
    params: &SpecializationParams,
) -> Result<DsiResult> {
    let target = build_term_stats(target_docs)?;
    dsi_from_stats(&target, reference, params)
}

pub fn dsi_from_stats(
    target: &TermStats,
    reference: &TermStats,
    params: &SpecializationParams,
) -> Result<DsiResult> {
    let terms = specialized_terms(target, reference, params)?;
    let occurrences: u64 = terms.iter().map(|t| target.count(t)).sum();
    Ok(DsiResult {
        dsi: occurrences as f64 / target.total_tokens as f64,
        specialized_terms: terms,
        specialized_token_occurrences: occurrences,
        total_tokens: target.total_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats_from(pairs: &[(&str, u64)]) -> TermStats {
        let counts: BTreeMap<String, u64> =
            pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect();
        TermStats {
            total_tokens: counts.values().sum(),
            vocab_size: counts.len(),
            doc_count: 1,
            doc_frequency: counts.keys().map(|t| (t.clone(), 1)).collect(),
            counts,
        }
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("The QT-interval, the QT-interval."),
            vec!["the", "qt", "interval", "the", "qt", "interval"]
        );
        assert!(tokenize("123 45").is_empty());
        assert_eq!(tokenize("covid19 a1 42x"), vec!["covid19", "a1", "42x"]);
        assert_eq!(tokenize("ÉCOLE Straße"), vec!["école", "straße"]);
    }

    #[test]
    fn term_stats_examples() {
        let empty = build_term_stats(&[]).unwrap();
        assert_eq!(empty.total_tokens, 0);
        assert_eq!(empty.vocab_size, 0);

        let docs = vec![Document::new("1", "a b a"), Document::new("2", "b c")];
        let s = build_term_stats(&docs).unwrap();
        assert_eq!(s.count("a"), 2);
        assert_eq!(s.count("b"), 2);
        assert_eq!(s.count("c"), 1);
        assert_eq!(s.total_tokens, 5);
        assert_eq!(s.doc_frequency["a"], 1);
        assert_eq!(s.doc_frequency["b"], 2);
        assert_eq!(s.doc_frequency["c"], 1);
        assert_eq!(s.doc_count, 2);

        let s = build_term_stats(&[Document::new("x", "x x x")]).unwrap();
        assert_eq!((s.total_tokens, s.vocab_size), (3, 1));
    }

    #[test]
    fn duplicate_id_is_named() {
        let docs = vec![Document::new("d1", "a"), Document::new("d1", "b")];
        let err = build_term_stats(&docs).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("d1"));
    }

    #[test]
    fn specialized_terms_examples() {
        let params = SpecializationParams::default();
        let s = stats_from(&[("qt", 10), ("the", 10)]);
        assert!(specialized_terms(&s, &s, &params).unwrap().is_empty());

        let reference = stats_from(&[("the", 1000)]);
        let terms = specialized_terms(&s, &reference, &params).unwrap();
        assert_eq!(terms.into_iter().collect::<Vec<_>>(), vec!["qt"]);
        let r_qt = frequency_ratio("qt", &s, &reference, 1.0, 2);
        assert!((r_qt - (11.0 / 22.0) / (1.0 / 1002.0)).abs() < 1e-9);
        let r_the = frequency_ratio("the", &s, &reference, 1.0, 2);
        assert!((r_the - (11.0 / 22.0) / (1001.0 / 1002.0)).abs() < 1e-12);

        let rare = stats_from(&[("qt", 2), ("the", 10)]);
        assert!(specialized_terms(&rare, &reference, &params)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn zero_token_corpora_rejected() {
        let params = SpecializationParams::default();
        let empty = TermStats::default();
        let s = stats_from(&[("a", 4)]);
        assert!(specialized_terms(&empty, &s, &params).is_err());
        assert!(specialized_terms(&s, &empty, &params).is_err());
        assert!(dsi(&[Document::new("a", "12 34")], &s, &params).is_err());
    }

    #[test]
    fn bad_params_rejected() {
        let s = stats_from(&[("a", 4)]);
        for p in [
            SpecializationParams { ratio_threshold: 1.0, ..Default::default() },
            SpecializationParams { min_count: 0, ..Default::default() },
            SpecializationParams { smoothing: 0.0, ..Default::default() },
        ] {
            assert!(specialized_terms(&s, &s, &p).unwrap_err().is_validation());
        }
    }

    #[test]
    fn dsi_examples() {
        let params = SpecializationParams::default();
        let reference = build_term_stats(&[Document::new("r", "the cat sat on the mat")]).unwrap();

        // nothing over-represented
        let same = vec![Document::new("t", "the cat sat on the mat")];
        assert_eq!(dsi(&same, &reference, &params).unwrap().dsi, 0.0);

        // reference disjoint: r = (6/11) / (1/12) ≈ 6.5
        let disjoint = vec![Document::new("t", "qt qt qt qt qt")];
        assert_eq!(dsi(&disjoint, &reference, &params).unwrap().dsi, 1.0);

        // 10 tokens, "qt" occurs 4 times and is the only specialized term:
        // r(qt) = (5/16) / (1/66) ≈ 20.6 against a 60-token reference
        let reference: Vec<Document> = (0..10)
            .map(|i| Document::new(format!("r{i}"), "the cat sat on the mat"))
            .collect();
        let reference = build_term_stats(&reference).unwrap();
        let docs = vec![
            Document::new("a", "qt the cat qt sat"),
            Document::new("b", "qt on the mat qt"),
        ];
        let r = dsi(&docs, &reference, &params).unwrap();
        assert_eq!(r.total_tokens, 10);
        assert_eq!(r.specialized_token_occurrences, 4);
        assert_eq!(r.specialized_terms.len(), 1);
        assert!((r.dsi - 0.4).abs() < 1e-15);
    }

    #[test]
    fn label_accepts_scalars() {
        let d: Document = serde_json::from_str(r#"{"id":"a","text":"x","label":1,"extra":3}"#).unwrap();
        assert_eq!(d.label.as_deref(), Some("1"));
        let d: Document = serde_json::from_str(r#"{"id":"a","label":"pos"}"#).unwrap();
        assert_eq!(d.label.as_deref(), Some("pos"));
        assert_eq!(d.text, "");
        let d: Document = serde_json::from_str(r#"{"id":"a","text":"x"}"#).unwrap();
        assert!(d.label.is_none());
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,80}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn stats_invariants_and_permutation(
            texts in proptest::collection::vec("[a-d ]{0,20}", 0..8),
            rot in 0usize..8,
        ) {
            let docs: Vec<Document> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), t.clone()))
                .collect();
            let s = build_term_stats(&docs).unwrap();
            prop_assert_eq!(s.counts.values().sum::<u64>(), s.total_tokens);
            prop_assert_eq!(s.vocab_size, s.counts.len());
            for (tok, &df) in &s.doc_frequency {
                prop_assert!(df >= 1 && df as usize <= s.doc_count);
                prop_assert!(s.counts[tok] >= 1);
            }
            let mut rotated = docs.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            prop_assert_eq!(build_term_stats(&rotated).unwrap(), s.clone());
            prop_assert_eq!(build_term_stats_with(Execution::Sequential, &docs).unwrap(), s);
        }

        #[test]
        fn dsi_bounded_and_monotone_in_ratio(
            target in "[a-f ]{5,60}",
            reference in "[a-h ]{5,60}",
            rho_lo in 1.01f64..4.0,
            delta in 0.0f64..6.0,
        ) {
            let t = vec![Document::new("t", target)];
            let r = build_term_stats(&[Document::new("r", reference)]).unwrap();
            let ts = build_term_stats(&t).unwrap();
            prop_assume!(ts.total_tokens > 0 && r.total_tokens > 0);
            let lo = SpecializationParams { ratio_threshold: rho_lo, ..Default::default() };
            let hi = SpecializationParams { ratio_threshold: rho_lo + delta, ..Default::default() };
            let a = dsi(&t, &r, &lo).unwrap();
            let b = dsi(&t, &r, &hi).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.dsi));
            prop_assert!(b.specialized_terms.is_subset(&a.specialized_terms));
            prop_assert!(a.dsi >= b.dsi);
            prop_assert_eq!(dsi(&t, &ts, &lo).unwrap().dsi, 0.0);
        }
    }
}
