//! Elastic Weight Consolidation on linear logistic models.
//!
//! A model trained on task A is frozen into an [`EwcAnchor`] (optimum plus
//! diagonal Fisher information). Training on task B then minimizes the
//! task-B loss plus `λ/2 · Σ F_i (θ_i − θ*_i)²`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::matrix::{DenseMatrix, Rows};
use crate::par::{self, Execution};
use crate::scl::logistic::{
    accuracy_on, minimize, sigmoid, train_logistic, validate_xy, LogisticHyper, LogisticLoss,
    Objective,
};

/// Weights plus bias of a binary logistic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dimension],
            bias: 0.0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// `weights ⧺ [bias]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn from_params(theta: &[f64]) -> Result<Self> {
        let (bias, weights) = theta
            .split_last()
            .ok_or_else(|| Error::validation("empty parameter vector"))?;
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("non-finite model parameter"));
        }
        Ok(LinearModel {
            weights: weights.to_vec(),
            bias: *bias,
        })
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        sigmoid(z)
    }
}

/// One row of a dense task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: u8,
}

/// Dense labeled data for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

impl TaskData {
    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|e| e.y > 1) {
            return Err(Error::validation(format!("label {} is not 0 or 1", bad.y)));
        }
        let rows: Vec<Vec<f64>> = examples.iter().map(|e| e.x.clone()).collect();
        let x = DenseMatrix::from_rows(&rows)?;
        let y = examples.iter().map(|e| e.y as f64).collect();
        Ok(TaskData { x, y })
    }

    pub fn to_examples(&self) -> Vec<LabeledExample> {
        (0..self.x.rows)
            .map(|i| LabeledExample {
                x: self.x.row(i).to_vec(),
                y: self.y[i] as u8,
            })
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_examples(&jsonl::read_jsonl(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write_jsonl(path, &self.to_examples())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.x.cols
    }

    fn subset(&self, idx: &[usize]) -> TaskData {
        TaskData {
            x: DenseMatrix::from_fn(idx.len(), self.x.cols, |r, c| self.x.get(idx[r], c)),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Seeded shuffle, then the first `train_fraction` rows train and the
    /// rest evaluate. Both halves keep at least one row.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(TaskData, TaskData)> {
        if self.len() < 2 {
            return Err(Error::validation("a task needs at least 2 examples to split"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64 * train_fraction).round() as usize).clamp(1, self.len() - 1);
        Ok((self.subset(&idx[..n_train]), self.subset(&idx[n_train..])))
    }
}

/// Task-A optimum, its diagonal Fisher information and the penalty strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    pub theta_star: Vec<f64>,
    pub fisher_diag: Vec<f64>,
    pub lambda: f64,
}

impl EwcAnchor {
    pub fn new(theta_star: Vec<f64>, fisher_diag: Vec<f64>, lambda: f64) -> Result<Self> {
        if theta_star.len() != fisher_diag.len() {
            return Err(Error::validation(format!(
                "anchor length {} does not match Fisher length {}",
                theta_star.len(),
                fisher_diag.len()
            )));
        }
        if fisher_diag.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::validation("Fisher entries must be finite and >= 0"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::validation(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(EwcAnchor {
            theta_star,
            fisher_diag,
            lambda,
        })
    }
}

/// Mean squared log-likelihood gradient per parameter (bias last).
pub fn fisher_diagonal<R: Rows>(model: &LinearModel, x: &R, y: &[f64]) -> Result<Vec<f64>> {
    validate_xy(x, y)?;
    let d = x.n_cols();
    if model.dimension() != d {
        return Err(Error::validation(format!(
            "model dimension {} does not match data dimension {d}",
            model.dimension()
        )));
    }
    let n = x.n_rows() as f64;
    let mut fisher = vec![0.0; d + 1];
    for (i, &yi) in y.iter().enumerate() {
        let r = sigmoid(x.row_dot(i, &model.weights) + model.bias) - yi;
        let r2 = r * r / n;
        x.row_axpy_sq(i, r2, &mut fisher[..d]);
        fisher[d] += r2;
    }
    Ok(fisher)
}

pub fn ewc_penalty(theta: &[f64], anchor: &EwcAnchor) -> Result<f64> {
    if theta.len() != anchor.theta_star.len() {
        return Err(Error::validation(format!(
            "parameter length {} does not match anchor length {}",
            theta.len(),
            anchor.theta_star.len()
        )));
    }
    Ok(penalty_value(theta, anchor))
}

fn penalty_value(theta: &[f64], anchor: &EwcAnchor) -> f64 {
    let s: f64 = theta
        .iter()
        .zip(&anchor.theta_star)
        .zip(&anchor.fisher_diag)
        .map(|((t, s), f)| f * (t - s) * (t - s))
        .sum();
    0.5 * anchor.lambda * s
}

/// Task-B logistic loss plus the EWC penalty.
pub struct EwcObjective<'a, R: Rows> {
    pub loss: LogisticLoss<'a, R>,
    pub anchor: &'a EwcAnchor,
}

impl<R: Rows> Objective for EwcObjective<'_, R> {
    fn n_params(&self) -> usize {
        self.loss.n_params()
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.loss.value_grad(theta, grad);
        let lambda = self.anchor.lambda;
        for (((g, t), s), f) in grad
            .iter_mut()
            .zip(theta)
            .zip(&self.anchor.theta_star)
            .zip(&self.anchor.fisher_diag)
        {
            *g += lambda * f * (t - s);
        }
        v + penalty_value(theta, self.anchor)
    }
}

/// Gradient descent on the penalized task-B objective, warm-started at `init`.
pub fn train_with_ewc<R: Rows>(
    x: &R,
    y: &[f64],
    init: &LinearModel,
    anchor: &EwcAnchor,
    hyper: &LogisticHyper,
) -> Result<LinearModel> {
    hyper.validate()?;
    validate_xy(x, y)?;
    if init.dimension() != x.n_cols() || anchor.theta_star.len() != x.n_cols() + 1 {
        return Err(Error::validation(format!(
            "dimension mismatch: data {}, model {}, anchor {}",
            x.n_cols(),
            init.dimension(),
            anchor.theta_star.len()
        )));
    }
    let obj = EwcObjective {
        loss: LogisticLoss { x, y, l2: hyper.l2 },
        anchor,
    };
    let min = minimize(&obj, init.to_params(), hyper);
    LinearModel::from_params(&min.theta)
}

/// Outcome of one train-A-then-B run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRunResult {
    pub seed: u64,
    pub lambda: f64,
    #[serde(rename = "acc_taskA_before")]
    pub acc_task_a_before: f64,
    #[serde(rename = "acc_taskA_after")]
    pub acc_task_a_after: f64,
    #[serde(rename = "acc_taskB_after")]
    pub acc_task_b_after: f64,
    pub forgetting: f64,
}

/// Fraction of each task used for training; the rest is held out.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Train on A, anchor, train on B (penalized when `lambda > 0`), and measure
/// held-out accuracy on both tasks. The seed only drives the train/eval split.
pub fn run_sequential_experiment(
    task_a: &TaskData,
    task_b: &TaskData,
    lambda: f64,
    hyper: &LogisticHyper,
    seed: u64,
) -> Result<SequentialRunResult> {
    if task_a.dimension() != task_b.dimension() {
        return Err(Error::validation(format!(
            "task A has dimension {}, task B has {}",
            task_a.dimension(),
            task_b.dimension()
        )));
    }
    let (a_train, a_eval) = task_a.split(TRAIN_FRACTION, seed)?;
    let (b_train, b_eval) = task_b.split(TRAIN_FRACTION, seed.wrapping_add(1))?;

    let model_a = train_logistic(&a_train.x, &a_train.y, hyper)?;
    let acc_a_before = accuracy_on(&model_a, &a_eval.x, &a_eval.y);

    let fisher = fisher_diagonal(&model_a, &a_train.x, &a_train.y)?;
    let anchor = EwcAnchor::new(model_a.to_params(), fisher, lambda)?;
    let model_b = train_with_ewc(&b_train.x, &b_train.y, &model_a, &anchor, hyper)?;

    let acc_a_after = accuracy_on(&model_b, &a_eval.x, &a_eval.y);
    Ok(SequentialRunResult {
        seed,
        lambda,
        acc_task_a_before: acc_a_before,
        acc_task_a_after: acc_a_after,
        acc_task_b_after: accuracy_on(&model_b, &b_eval.x, &b_eval.y),
        forgetting: acc_a_before - acc_a_after,
    })
}

/// Every `(seed, λ)` cell, seed-major. Cells are independent and run on the
/// given execution mode.
pub fn run_sweep<F>(
    exec: Execution,
    seeds: &[u64],
    lambdas: &[f64],
    hyper: &LogisticHyper,
    tasks_for_seed: F,
) -> Result<Vec<SequentialRunResult>>
where
    F: Fn(u64) -> Result<(TaskData, TaskData)> + Sync + Send,
{
    let cells: Vec<(u64, f64)> = seeds
        .iter()
        .flat_map(|&s| lambdas.iter().map(move |&l| (s, l)))
        .collect();
    par::map(exec, &cells, |&(seed, lambda)| {
        let (a, b) = tasks_for_seed(seed)?;
        run_sequential_experiment(&a, &b, lambda, hyper, seed)
    })
    .into_iter()
    .collect()
}

pub fn write_sweep_csv(path: &Path, results: &[SequentialRunResult]) -> Result<()> {
    jsonl::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["seed", "lambda", "forgetting", "acc_B_after"]).map_err(io)?;
    for r in results {
        w.write_record([
            r.seed.to_string(),
            r.lambda.to_string(),
            r.forgetting.to_string(),
            r.acc_task_b_after.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
