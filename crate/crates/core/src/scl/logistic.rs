//! L2-regularized logistic regression trained by full-batch gradient descent.
//!
//! Parameters are laid out as `weights ⧺ [bias]`. The descent uses an
//! Armijo backtracking line search whose trial step starts at
//! `learning_rate`, doubles after every accepted step and halves on every
//! rejected one. Initialization is zero unless a warm start is given, so a
//! fit is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::continual::LinearModel;
use crate::error::{Error, Result};
use crate::matrix::Rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            learning_rate: 0.1,
            l2: 1e-3,
            max_epochs: 500,
            grad_tol: 1e-6,
        }
    }
}

impl LogisticHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be > 0"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::validation("l2 must be >= 0"));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return Err(Error::validation("grad_tol must be > 0"));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// A differentiable scalar function of a parameter vector.
pub trait Objective {
    fn n_params(&self) -> usize;
    /// Returns the value and overwrites `grad` with the gradient.
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

/// Mean negative log-likelihood plus `l2/2 · |w|²` (bias unpenalized).
pub struct LogisticLoss<'a, R: Rows> {
    pub x: &'a R,
    pub y: &'a [f64],
    pub l2: f64,
}

impl<R: Rows> Objective for LogisticLoss<'_, R> {
    fn n_params(&self) -> usize {
        self.x.n_cols() + 1
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.x.n_cols();
        let (w, b) = (&theta[..d], theta[d]);
        grad.fill(0.0);
        let n = self.x.n_rows();
        let inv_n = 1.0 / n as f64;
        let mut nll = 0.0;
        for (i, &y) in self.y.iter().enumerate() {
            let z = self.x.row_dot(i, w) + b;
            nll += softplus(z) - y * z;
            let r = (sigmoid(z) - y) * inv_n;
            self.x.row_axpy(i, r, &mut grad[..d]);
            grad[d] += r;
        }
        let mut reg = 0.0;
        for (g, &wj) in grad[..d].iter_mut().zip(w) {
            *g += self.l2 * wj;
            reg += wj * wj;
        }
        nll * inv_n + 0.5 * self.l2 * reg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub epochs: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-18;
const MAX_STEP: f64 = 1e8;

/// Gradient descent with backtracking from `init`.
///
/// Stops when the gradient's infinity norm falls to `grad_tol`, after
/// `max_epochs` accepted steps, or when no step size yields descent.
pub fn minimize(obj: &impl Objective, init: Vec<f64>, hyper: &LogisticHyper) -> Minimum {
    let p = obj.n_params();
    debug_assert_eq!(init.len(), p);
    let mut theta = init;
    let mut grad = vec![0.0; p];
    let mut value = obj.value_grad(&theta, &mut grad);
    let mut trial = vec![0.0; p];
    let mut trial_grad = vec![0.0; p];
    let mut step = hyper.learning_rate;

    for epoch in 0..hyper.max_epochs {
        if inf_norm(&grad) <= hyper.grad_tol {
            return Minimum { theta, value, epochs: epoch, converged: true };
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        loop {
            for ((t, th), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th - step * g;
            }
            let v = obj.value_grad(&trial, &mut trial_grad);
            if v.is_finite() && v <= value - ARMIJO_C * step * g2 {
                std::mem::swap(&mut theta, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                value = v;
                step = (step * 2.0).min(MAX_STEP);
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                let converged = inf_norm(&grad) <= hyper.grad_tol;
                return Minimum { theta, value, epochs: epoch, converged };
            }
        }
    }
    let converged = inf_norm(&grad) <= hyper.grad_tol;
    Minimum { theta, value, epochs: hyper.max_epochs, converged }
}

pub(crate) fn validate_xy<R: Rows>(x: &R, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::validation("training set is empty"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::validation(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if !x.all_finite() {
        return Err(Error::validation("non-finite feature value"));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Fit from zero initialization.
pub fn train_logistic<R: Rows>(x: &R, y: &[f64], hyper: &LogisticHyper) -> Result<LinearModel> {
    train_logistic_from(x, y, &LinearModel::zeros(x.n_cols()), hyper)
}

/// Fit warm-started at `init`.
pub fn train_logistic_from<R: Rows>(
    x: &R,
    y: &[f64],
    init: &LinearModel,
    hyper: &LogisticHyper,
) -> Result<LinearModel> {
    hyper.validate()?;
    validate_xy(x, y)?;
    if init.dimension() != x.n_cols() {
        return Err(Error::validation(format!(
            "initial model has dimension {}, data has {}",
            init.dimension(),
            x.n_cols()
        )));
    }
    let loss = LogisticLoss { x, y, l2: hyper.l2 };
    let min = minimize(&loss, init.to_params(), hyper);
    LinearModel::from_params(&min.theta)
}

/// Share of rows where `model` predicts the label at the 0.5 threshold.
pub fn accuracy_on<R: Rows>(model: &LinearModel, x: &R, y: &[f64]) -> f64 {
    let correct = (0..x.n_rows())
        .filter(|&i| {
            let p = sigmoid(x.row_dot(i, &model.weights) + model.bias);
            (p >= 0.5) == (y[i] == 1.0)
        })
        .count();
    correct as f64 / x.n_rows() as f64
}
