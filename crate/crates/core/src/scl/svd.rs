//! Truncated SVD through a cyclic Jacobi eigendecomposition of `AᵀA`.
//!
//! The pivot-predictor matrix has few columns (one per pivot), so its Gram
//! matrix is tiny and Jacobi rotations converge in a handful of sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Singular values below this are treated as zero when forming `U`.
const NULL_SIGMA: f64 = 1e-12;
const NOISE_RESIDUAL: f64 = 1e-3;
const MAX_SWEEPS: usize = 100;

/// Leading `k` singular triples of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    /// rows × k, orthonormal columns.
    pub u: DenseMatrix,
    /// k values, nonincreasing.
    pub sigma: Vec<f64>,
    /// cols × k, orthonormal columns.
    pub v: DenseMatrix,
    pub k: usize,
}

impl SvdFactors {
    /// `U · diag(σ) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n) = (self.u.rows, self.v.rows);
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..self.k)
                .map(|c| self.u.get(i, c) * self.sigma[c] * self.v.get(j, c))
                .sum()
        })
    }
}

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted in decreasing order and the matching
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::validation("eigendecomposition needs a square matrix"));
    }
    if !a.is_finite() {
        return Err(Error::validation("non-finite matrix entry"));
    }
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);

                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove the components of `v` along each of `basis` (twice, for stability).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let proj = dot(v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
}

/// Unit vector orthogonal to `basis`, built from the standard basis vector
/// with the largest residual.
fn complete_basis(dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        let norm = dot(&e, &e).sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, e));
        }
    }
    let (norm, mut e) = best.expect("dimension is positive");
    e.iter_mut().for_each(|x| *x /= norm);
    e
}

/// The `k` largest singular triples of `a`.
pub fn svd_topk(a: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    let limit = a.rows.min(a.cols);
    if k == 0 || k > limit {
        return Err(Error::validation(format!(
            "k = {k} out of range for a {}x{} matrix (1..={limit})",
            a.rows, a.cols
        )));
    }
    let (eigvals, eigvecs) = symmetric_eigen(&a.gram())?;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let s = eigvals[j].max(0.0).sqrt();
        let vj = eigvecs.column(j);
        let mut col = None;
        if s > NULL_SIGMA {
            let mut u: Vec<f64> = (0..a.rows).map(|r| dot(a.row(r), &vj) / s).collect();
            orthogonalize(&mut u, &u_cols);
            let norm = dot(&u, &u).sqrt();
            // A σ that is only rounding noise yields a direction already
            // spanned by earlier columns; treat it as null.
            if norm > NOISE_RESIDUAL {
                u.iter_mut().for_each(|x| *x /= norm);
                col = Some(u);
            }
        }
        let col = col.unwrap_or_else(|| complete_basis(a.rows, &u_cols));
        u_cols.push(col);
        sigma.push(s);
    }

    Ok(SvdFactors {
        u: DenseMatrix::from_fn(a.rows, k, |r, c| u_cols[c][r]),
        sigma,
        v: DenseMatrix::from_fn(a.cols, k, |r, c| eigvecs.get(r, c)),
        k,
    })
}

/// Largest deviation of `MᵀM` from the identity.
pub fn orthonormality_error(m: &DenseMatrix) -> f64 {
    m.gram().max_abs_diff(&DenseMatrix::identity(m.cols))
}
