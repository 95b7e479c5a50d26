//! Small dense and sparse-binary containers used by the learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows in dense matrix"));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::validation(format!(
                "shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..self.cols {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..self.cols {
                    g.data[i * self.cols + j] += a * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                g.data[i * self.cols + j] = g.data[j * self.cols + i];
            }
        }
        g
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Binary vector stored as its sorted set of one-positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBinary {
    pub dim: usize,
    pub indices: Vec<usize>,
}

impl SparseBinary {
    pub fn new(dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::validation(format!(
                    "index {last} out of range for dimension {dim}"
                )));
            }
        }
        Ok(SparseBinary { dim, indices })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseBinary {
            dim,
            indices: Vec::new(),
        }
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.indices {
            v[i] = 1.0;
        }
        v
    }
}

/// Row access for a design matrix. The learners only need dot products with
/// a weight vector and scaled accumulation into a gradient.
pub trait Rows: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn row_dot(&self, row: usize, w: &[f64]) -> f64;
    /// `out += alpha * x_row`.
    fn row_axpy(&self, row: usize, alpha: f64, out: &mut [f64]);
    /// `out += alpha * x_row²` componentwise.
    fn row_axpy_sq(&self, row: usize, alpha: f64, out: &mut [f64]);
    fn all_finite(&self) -> bool;
}

impl Rows for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn row_dot(&self, row: usize, w: &[f64]) -> f64 {
        self.row(row).iter().zip(w).map(|(x, w)| x * w).sum()
    }

    fn row_axpy(&self, row: usize, alpha: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.row(row)) {
            *o += alpha * x;
        }
    }

    fn row_axpy_sq(&self, row: usize, alpha: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.row(row)) {
            *o += alpha * x * x;
        }
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// Binary design matrix: one [`SparseBinary`] per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRows {
    pub cols: usize,
    pub rows: Vec<Vec<usize>>,
}

impl Rows for BinaryRows {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn row_dot(&self, row: usize, w: &[f64]) -> f64 {
        self.rows[row].iter().map(|&i| w[i]).sum()
    }

    fn row_axpy(&self, row: usize, alpha: f64, out: &mut [f64]) {
        for &i in &self.rows[row] {
            out[i] += alpha;
        }
    }

    fn row_axpy_sq(&self, row: usize, alpha: f64, out: &mut [f64]) {
        self.row_axpy(row, alpha, out);
    }

    fn all_finite(&self) -> bool {
        true
    }
}
