//! Structural correspondence learning for two-domain binary classification.
//!
//! Pipeline: binary bag-of-words features over both corpora, pivot selection
//! (frequent in both domains, informative about the source label), one
//! logistic predictor per pivot trained on non-pivot features, truncated SVD
//! of the stacked predictor weights, and a final classifier over the original
//! features augmented with the SVD projection.

pub mod logistic;
pub mod mi;
pub mod svd;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::continual::LinearModel;
use crate::corpus::{tokenize, validate_ids, Document};
use crate::error::{Error, Result, StageExt};
use crate::matrix::{BinaryRows, DenseMatrix, Rows, SparseBinary};
use crate::par::{self, Execution};

pub use logistic::{sigmoid, train_logistic, train_logistic_from, LogisticHyper};
pub use mi::mutual_information;
pub use svd::{svd_topk, SvdFactors};

pub const MODEL_VERSION: &str = "scl-v1";

/// Vocabulary of both domains, indexed in lexicographic token order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FeatureSpaceRepr", into = "FeatureSpaceRepr")]
pub struct FeatureSpace {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSpaceRepr {
    tokens: Vec<String>,
}

impl From<FeatureSpaceRepr> for FeatureSpace {
    fn from(r: FeatureSpaceRepr) -> Self {
        FeatureSpace::from_sorted(r.tokens)
    }
}

impl From<FeatureSpace> for FeatureSpaceRepr {
    fn from(s: FeatureSpace) -> Self {
        FeatureSpaceRepr { tokens: s.tokens }
    }
}

impl FeatureSpace {
    fn from_sorted(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        FeatureSpace { tokens, index }
    }

    /// Every token occurring in any of `corpora`.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a [Document]>) -> Result<Self> {
        let mut vocab = BTreeSet::new();
        for docs in corpora {
            for d in docs {
                vocab.extend(tokenize(&d.text));
            }
        }
        if vocab.is_empty() {
            return Err(Error::validation("corpora contain no tokens"));
        }
        Ok(Self::from_sorted(vocab.into_iter().collect()))
    }

    pub fn dimension(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }
}

/// Presence vector of the document's in-space tokens.
pub fn featurize(doc: &Document, space: &FeatureSpace) -> SparseBinary {
    let mut idx: Vec<usize> = tokenize(&doc.text)
        .iter()
        .filter_map(|t| space.index_of(t))
        .collect();
    idx.sort_unstable();
    idx.dedup();
    SparseBinary {
        dim: space.dimension(),
        indices: idx,
    }
}

/// Lexicographically smaller label maps to 0, larger to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLabels {
    pub negative: String,
    pub positive: String,
}

impl BinaryLabels {
    pub fn from_docs(docs: &[Document]) -> Result<(Self, Vec<f64>)> {
        let mut distinct = BTreeSet::new();
        for d in docs {
            let l = d.label.as_deref().ok_or_else(|| {
                Error::validation(format!("source document {:?} has no label", d.id))
            })?;
            distinct.insert(l);
        }
        if distinct.len() != 2 {
            return Err(Error::validation(format!(
                "source labels must take exactly 2 values, found {}",
                distinct.len()
            )));
        }
        let mut it = distinct.into_iter();
        let labels = BinaryLabels {
            negative: it.next().unwrap().to_string(),
            positive: it.next().unwrap().to_string(),
        };
        let y = docs
            .iter()
            .map(|d| labels.encode(d.label.as_deref().unwrap()))
            .collect::<Option<Vec<f64>>>()
            .expect("labels drawn from the same documents");
        Ok((labels, y))
    }

    pub fn encode(&self, label: &str) -> Option<f64> {
        if label == self.positive {
            Some(1.0)
        } else if label == self.negative {
            Some(0.0)
        } else {
            None
        }
    }

    pub fn decode(&self, positive: bool) -> &str {
        if positive {
            &self.positive
        } else {
            &self.negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclConfig {
    pub n_pivots: usize,
    pub min_freq_each_domain: u64,
    pub k_dims: usize,
    pub projection_scale: f64,
    #[serde(flatten)]
    pub hyper: LogisticHyper,
    pub seed: u64,
}

impl Default for SclConfig {
    fn default() -> Self {
        SclConfig {
            n_pivots: 50,
            min_freq_each_domain: 10,
            k_dims: 25,
            projection_scale: 1.0,
            hyper: LogisticHyper::default(),
            seed: 42,
        }
    }
}

impl SclConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_dims < 1 {
            return Err(Error::validation("k_dims must be >= 1"));
        }
        if self.n_pivots < self.k_dims {
            return Err(Error::validation(format!(
                "k_dims ({}) must not exceed n_pivots ({})",
                self.k_dims, self.n_pivots
            )));
        }
        if self.min_freq_each_domain < 1 {
            return Err(Error::validation("min_freq_each_domain must be >= 1"));
        }
        if !(self.projection_scale.is_finite() && self.projection_scale > 0.0) {
            return Err(Error::validation("projection_scale must be > 0"));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotScore {
    pub frequency_source: u64,
    pub frequency_target: u64,
    pub mutual_information_bits: f64,
}

/// Selected pivots in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotSet {
    pub pivots: Vec<usize>,
    pub tokens: Vec<String>,
    pub scores: Vec<PivotScore>,
}

fn doc_frequencies(rows: &[SparseBinary], dim: usize) -> Vec<u64> {
    let mut df = vec![0u64; dim];
    for r in rows {
        for &i in &r.indices {
            df[i] += 1;
        }
    }
    df
}

/// Candidates have document frequency ≥ the floor in both domains; they are
/// ranked by MI with the source label, then total frequency, then token.
pub fn select_pivots(
    source_labeled: &[Document],
    target_unlabeled: &[Document],
    space: &FeatureSpace,
    cfg: &SclConfig,
) -> Result<PivotSet> {
    if source_labeled.is_empty() || target_unlabeled.is_empty() {
        return Err(Error::validation("pivot selection needs non-empty source and target corpora"));
    }
    let (_, y) = BinaryLabels::from_docs(source_labeled)?;
    let dim = space.dimension();
    let src: Vec<SparseBinary> = source_labeled.iter().map(|d| featurize(d, space)).collect();
    let tgt: Vec<SparseBinary> = target_unlabeled.iter().map(|d| featurize(d, space)).collect();
    let df_s = doc_frequencies(&src, dim);
    let df_t = doc_frequencies(&tgt, dim);

    // per-feature count of positive-label source documents containing it
    let mut with_pos = vec![0u64; dim];
    for (row, &label) in src.iter().zip(&y) {
        if label == 1.0 {
            for &i in &row.indices {
                with_pos[i] += 1;
            }
        }
    }
    let n_pos = y.iter().filter(|&&v| v == 1.0).count() as u64;
    let n_src = src.len() as u64;

    let mut candidates = Vec::new();
    for f in 0..dim {
        if df_s[f] < cfg.min_freq_each_domain || df_t[f] < cfg.min_freq_each_domain {
            continue;
        }
        let n11 = with_pos[f];
        let n10 = df_s[f] - n11;
        let n01 = n_pos - n11;
        let n00 = n_src - n11 - n10 - n01;
        let mi = mutual_information(n11, n10, n01, n00)?;
        candidates.push((f, mi));
    }
    if candidates.is_empty() {
        return Err(Error::validation(format!(
            "no pivot candidates reach document frequency {} in both domains; try a lower floor",
            cfg.min_freq_each_domain
        )));
    }
    candidates.sort_by(|&(a, mi_a), &(b, mi_b)| {
        mi_b.total_cmp(&mi_a)
            .then((df_s[b] + df_t[b]).cmp(&(df_s[a] + df_t[a])))
            .then(space.token(a).cmp(space.token(b)))
    });
    if candidates.len() < cfg.n_pivots {
        log::warn!(
            "only {} pivot candidates available, {} requested",
            candidates.len(),
            cfg.n_pivots
        );
    }
    candidates.truncate(cfg.n_pivots);
    Ok(PivotSet {
        pivots: candidates.iter().map(|&(f, _)| f).collect(),
        tokens: candidates.iter().map(|&(f, _)| space.token(f).to_string()).collect(),
        scores: candidates
            .iter()
            .map(|&(f, mi)| PivotScore {
                frequency_source: df_s[f],
                frequency_target: df_t[f],
                mutual_information_bits: mi,
            })
            .collect(),
    })
}

/// Mapping between full feature indices and the non-pivot row space.
#[derive(Debug, Clone, PartialEq)]
pub struct NonPivotIndex {
    /// Full feature index of each non-pivot row.
    pub features: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl NonPivotIndex {
    pub fn new(dimension: usize, pivots: &[usize]) -> Self {
        let pivot_set: BTreeSet<usize> = pivots.iter().copied().collect();
        let features: Vec<usize> = (0..dimension).filter(|f| !pivot_set.contains(f)).collect();
        let mut position = vec![None; dimension];
        for (row, &f) in features.iter().enumerate() {
            position[f] = Some(row);
        }
        NonPivotIndex { features, position }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Drop pivot components and reindex into the non-pivot space.
    pub fn restrict(&self, x: &SparseBinary) -> SparseBinary {
        SparseBinary {
            dim: self.len(),
            indices: x.indices.iter().filter_map(|&i| self.position[i]).collect(),
        }
    }
}

/// Weights of the pivot predictors: rows are non-pivot features, columns pivots.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrix {
    pub weights: DenseMatrix,
    pub row_features: Vec<usize>,
    pub col_features: Vec<usize>,
}

pub fn train_pivot_predictors(
    all_docs_unlabeled: &[Document],
    pivots: &PivotSet,
    space: &FeatureSpace,
    cfg: &SclConfig,
) -> Result<PredictorMatrix> {
    train_pivot_predictors_with(Execution::default(), all_docs_unlabeled, pivots, space, cfg)
}

/// [`train_pivot_predictors`] with an explicit execution mode. Each pivot's
/// predictor is independent; columns are assembled in pivot order.
pub fn train_pivot_predictors_with(
    exec: Execution,
    all_docs_unlabeled: &[Document],
    pivots: &PivotSet,
    space: &FeatureSpace,
    cfg: &SclConfig,
) -> Result<PredictorMatrix> {
    let nonpivot = NonPivotIndex::new(space.dimension(), &pivots.pivots);
    if nonpivot.is_empty() {
        return Err(Error::validation("every feature is a pivot; no non-pivot features remain"));
    }
    let full: Vec<SparseBinary> = all_docs_unlabeled.iter().map(|d| featurize(d, space)).collect();
    let inputs = BinaryRows {
        cols: nonpivot.len(),
        rows: full.iter().map(|x| nonpivot.restrict(x).indices).collect(),
    };
    let columns = par::map(exec, &pivots.pivots, |&p| {
        let y: Vec<f64> = full.iter().map(|x| x.contains(p) as u8 as f64).collect();
        train_logistic(&inputs, &y, &cfg.hyper).map(|m| m.weights)
    });
    let mut weights = DenseMatrix::zeros(nonpivot.len(), pivots.pivots.len());
    for (j, col) in columns.into_iter().enumerate() {
        for (i, w) in col?.into_iter().enumerate() {
            weights.set(i, j, w);
        }
    }
    Ok(PredictorMatrix {
        weights,
        row_features: nonpivot.features.clone(),
        col_features: pivots.pivots.clone(),
    })
}

/// `U_kᵀ · x` for a non-pivot presence vector.
pub fn project(x: &SparseBinary, svd: &SvdFactors) -> Result<Vec<f64>> {
    if x.dim != svd.u.rows {
        return Err(Error::validation(format!(
            "vector dimension {} does not match projection rows {}",
            x.dim, svd.u.rows
        )));
    }
    let mut out = vec![0.0; svd.k];
    for &i in &x.indices {
        for (o, u) in out.iter_mut().zip(svd.u.row(i)) {
            *o += u;
        }
    }
    Ok(out)
}

/// Original presence features followed by a scaled dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedFeatures {
    pub original: SparseBinary,
    pub projected: Vec<f64>,
}

impl AugmentedFeatures {
    pub fn len(&self) -> usize {
        self.original.dim + self.projected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = self.original.to_dense();
        v.extend_from_slice(&self.projected);
        v
    }
}

pub fn augment(x_original: &SparseBinary, x_projected: &[f64], mu: f64) -> AugmentedFeatures {
    AugmentedFeatures {
        original: x_original.clone(),
        projected: x_projected.iter().map(|v| mu * v).collect(),
    }
}

struct AugmentedRows<'a> {
    rows: &'a [AugmentedFeatures],
    base_dim: usize,
    cols: usize,
}

impl Rows for AugmentedRows<'_> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn row_dot(&self, row: usize, w: &[f64]) -> f64 {
        let r = &self.rows[row];
        let sparse: f64 = r.original.indices.iter().map(|&i| w[i]).sum();
        let dense: f64 = r.projected.iter().zip(&w[self.base_dim..]).map(|(x, w)| x * w).sum();
        sparse + dense
    }

    fn row_axpy(&self, row: usize, alpha: f64, out: &mut [f64]) {
        let r = &self.rows[row];
        for &i in &r.original.indices {
            out[i] += alpha;
        }
        for (o, x) in out[self.base_dim..].iter_mut().zip(&r.projected) {
            *o += alpha * x;
        }
    }

    fn row_axpy_sq(&self, row: usize, alpha: f64, out: &mut [f64]) {
        let r = &self.rows[row];
        for &i in &r.original.indices {
            out[i] += alpha;
        }
        for (o, x) in out[self.base_dim..].iter_mut().zip(&r.projected) {
            *o += alpha * x * x;
        }
    }

    fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| r.projected.iter().all(|v| v.is_finite()))
    }
}

/// Everything needed to score a new document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclModel {
    pub version: String,
    pub config: SclConfig,
    pub labels: BinaryLabels,
    pub feature_space: FeatureSpace,
    pub pivot_set: PivotSet,
    pub svd: SvdFactors,
    pub projection_scale: f64,
    pub final_classifier: LinearModel,
}

impl SclModel {
    pub fn augmented_features(&self, doc: &Document) -> AugmentedFeatures {
        let x = featurize(doc, &self.feature_space);
        let nonpivot = NonPivotIndex::new(self.feature_space.dimension(), &self.pivot_set.pivots);
        let proj = project(&nonpivot.restrict(&x), &self.svd).expect("model dimensions agree");
        augment(&x, &proj, self.projection_scale)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model is serializable")
    }
}

pub fn scl_fit(
    source_labeled: &[Document],
    target_unlabeled: &[Document],
    cfg: &SclConfig,
) -> Result<SclModel> {
    scl_fit_with(Execution::default(), source_labeled, target_unlabeled, cfg)
}

pub fn scl_fit_with(
    exec: Execution,
    source_labeled: &[Document],
    target_unlabeled: &[Document],
    cfg: &SclConfig,
) -> Result<SclModel> {
    cfg.validate().stage("config")?;
    validate_ids(source_labeled).stage("input")?;
    validate_ids(target_unlabeled).stage("input")?;
    let (labels, y) = BinaryLabels::from_docs(source_labeled).stage("input")?;

    let space = FeatureSpace::build([source_labeled, target_unlabeled]).stage("features")?;
    let pivots = select_pivots(source_labeled, target_unlabeled, &space, cfg).stage("pivots")?;

    let all_docs: Vec<Document> = source_labeled.iter().chain(target_unlabeled).cloned().collect();
    let predictors =
        train_pivot_predictors_with(exec, &all_docs, &pivots, &space, cfg).stage("predictors")?;
    let svd = svd_topk(&predictors.weights, cfg.k_dims).stage("svd")?;

    let nonpivot = NonPivotIndex::new(space.dimension(), &pivots.pivots);
    let rows: Vec<AugmentedFeatures> = source_labeled
        .iter()
        .map(|d| {
            let x = featurize(d, &space);
            let proj = project(&nonpivot.restrict(&x), &svd)?;
            Ok(augment(&x, &proj, cfg.projection_scale))
        })
        .collect::<Result<_>>()
        .stage("features")?;
    let design = AugmentedRows {
        rows: &rows,
        base_dim: space.dimension(),
        cols: space.dimension() + svd.k,
    };
    let final_classifier = train_logistic(&design, &y, &cfg.hyper).stage("classifier")?;

    Ok(SclModel {
        version: MODEL_VERSION.to_string(),
        config: cfg.clone(),
        labels,
        feature_space: space,
        pivot_set: pivots,
        projection_scale: cfg.projection_scale,
        svd,
        final_classifier,
    })
}

/// `(is_positive, probability of the positive label)`.
pub fn scl_predict(model: &SclModel, doc: &Document) -> (bool, f64) {
    let a = model.augmented_features(doc);
    let dim = model.feature_space.dimension();
    let w = &model.final_classifier.weights;
    let z = a.original.indices.iter().map(|&i| w[i]).sum::<f64>()
        + a.projected.iter().zip(&w[dim..]).map(|(x, w)| x * w).sum::<f64>()
        + model.final_classifier.bias;
    let p = sigmoid(z);
    (p >= 0.5, p)
}

/// Logistic classifier on the plain presence features, trained on the source
/// domain only. The reference point SCL is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceOnlyModel {
    pub labels: BinaryLabels,
    pub feature_space: FeatureSpace,
    pub classifier: LinearModel,
}

pub fn fit_source_only(
    source_labeled: &[Document],
    target_unlabeled: &[Document],
    hyper: &LogisticHyper,
) -> Result<SourceOnlyModel> {
    validate_ids(source_labeled)?;
    let (labels, y) = BinaryLabels::from_docs(source_labeled)?;
    let space = FeatureSpace::build([source_labeled, target_unlabeled])?;
    let x = BinaryRows {
        cols: space.dimension(),
        rows: source_labeled.iter().map(|d| featurize(d, &space).indices).collect(),
    };
    let classifier = train_logistic(&x, &y, hyper)?;
    Ok(SourceOnlyModel {
        labels,
        feature_space: space,
        classifier,
    })
}

/// Anything that scores a document with a positive-label probability.
pub trait DocClassifier {
    fn labels(&self) -> &BinaryLabels;
    fn probability(&self, doc: &Document) -> f64;

    fn predict_label(&self, doc: &Document) -> &str {
        self.labels().decode(self.probability(doc) >= 0.5)
    }
}

impl DocClassifier for SclModel {
    fn labels(&self) -> &BinaryLabels {
        &self.labels
    }

    fn probability(&self, doc: &Document) -> f64 {
        scl_predict(self, doc).1
    }
}

impl DocClassifier for SourceOnlyModel {
    fn labels(&self) -> &BinaryLabels {
        &self.labels
    }

    fn probability(&self, doc: &Document) -> f64 {
        let x = featurize(doc, &self.feature_space);
        let w = &self.classifier.weights;
        sigmoid(x.indices.iter().map(|&i| w[i]).sum::<f64>() + self.classifier.bias)
    }
}

/// Share of labeled documents the classifier gets right.
pub fn labeled_accuracy(model: &impl DocClassifier, docs: &[Document]) -> Result<f64> {
    let mut counts: BTreeMap<bool, usize> = BTreeMap::new();
    for d in docs {
        let gold = d.label.as_deref().ok_or_else(|| {
            Error::validation(format!("document {:?} has no label to score against", d.id))
        })?;
        *counts.entry(model.predict_label(d) == gold).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::validation("no documents to score"));
    }
    Ok(counts.get(&true).copied().unwrap_or(0) as f64 / total as f64)
}
