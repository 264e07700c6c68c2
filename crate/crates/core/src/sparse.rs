//! Compressed sparse row storage, vector kernels and FLOP accounting.
//!
//! Every digital operation of the Richardson loop goes through the counted
//! kernels on [`FlopCounter`], so the live counter can be compared against the
//! closed-form per-iteration cost `3n + 2(nnz(A) + nnz(M))`.
//!
//! AXPY and the Euclidean norm are charged `n` FLOPs each (one fused
//! multiply-add per entry); a sparse MVM is charged `2·nnz`.

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Real sparse matrix in CSR layout.
///
/// Column indices are strictly increasing within each row and no exact
/// zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(
                "col_indices and values differ in length".into(),
            ));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "column indices of row {i} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::InvalidStructure(format!(
                    "column index out of range in row {i}"
                )));
            }
            if values[lo..hi].contains(&0.0) {
                return Err(Error::InvalidStructure(format!(
                    "explicit zero stored in row {i}"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that end up exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (i, j, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let triplets: Vec<_> = diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
        Self::from_triplets(n, n, &triplets).expect("diagonal entries are in range")
    }

    /// Converts a dense matrix, keeping every entry that is not exactly zero.
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let v = dense[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &triplets)
            .expect("dense indices are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            let slot = next[j];
            col_indices[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            dense[(i, j)] = v;
        }
        dense
    }

    /// `y = A x` without FLOP accounting.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `y = Aᵀ x` without FLOP accounting.
    pub fn mul_transpose_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * x[i];
            }
        }
    }
}

/// Sparse matrix-vector product, uncounted.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len(a.n_cols(), x.len())?;
    let mut y = vec![0.0; a.n_rows()];
    a.mul_vec_into(x, &mut y);
    Ok(y)
}

/// `alpha·x + y`, uncounted.
pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_len(x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect())
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Digital FLOPs and analog MVMs spent by a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounter {
    pub digital_flops: u64,
    pub analog_mvms: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_digital(&mut self, flops: u64) {
        self.digital_flops += flops;
    }

    pub fn charge_analog_mvm(&mut self) {
        self.analog_mvms += 1;
    }

    /// Counted [`spmv`]: `2·nnz(A)` FLOPs.
    pub fn spmv(&mut self, a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
        let y = spmv(a, x)?;
        self.charge_digital(2 * a.nnz() as u64);
        Ok(y)
    }

    /// Counted [`axpy`]: `n` FLOPs.
    pub fn axpy(&mut self, alpha: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let z = axpy(alpha, x, y)?;
        self.charge_digital(x.len() as u64);
        Ok(z)
    }

    /// Counted [`norm2`]: `n` FLOPs.
    pub fn norm2(&mut self, x: &[f64]) -> f64 {
        self.charge_digital(x.len() as u64);
        norm2(x)
    }
}

/// Anything that can be applied to a vector together with its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn nrows(&self) -> usize {
        self.n_rows
    }
    fn ncols(&self) -> usize {
        self.n_cols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.mul_transpose_vec_into(x, y);
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = DVectorView::from_slice(x, x.len());
        let mut yv = DVectorViewMut::from_slice(y, self.nrows());
        yv.gemv(1.0, self, &xv, 0.0);
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let xv = DVectorView::from_slice(x, x.len());
        let mut yv = DVectorViewMut::from_slice(y, self.ncols());
        yv.gemv_tr(1.0, self, &xv, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 2, -1.0),
                (1, 1, 3.0),
                (2, 0, 4.0),
                (2, 2, 5.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn spmv_identity_and_diagonal() {
        let i3 = SparseMatrix::identity(3);
        assert_eq!(spmv(&i3, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = SparseMatrix::from_diagonal(&[2.0, 3.0]);
        assert_eq!(spmv(&d, &[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let err = spmv(&small(), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(1.0, &[1.0, 1.0], &[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(
            axpy(0.0, &[7.0, -3.0], &[5.0, 6.0]).unwrap(),
            vec![5.0, 6.0]
        );
        assert_eq!(
            axpy(-2.0, &[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(axpy(1.0, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        assert_eq!(norm2(&[0.0; 7]), 0.0);
        assert_eq!(norm2(&[1.0; 4]), 2.0);
    }

    #[test]
    fn counter_charges() {
        let a = small();
        let mut c = FlopCounter::new();
        c.spmv(&a, &[1.0; 3]).unwrap();
        assert_eq!(c.digital_flops, 10);
        c.axpy(1.0, &[1.0; 3], &[1.0; 3]).unwrap();
        c.norm2(&[1.0; 3]);
        assert_eq!(c.digital_flops, 16);
        assert_eq!(c.analog_mvms, 0);
    }

    #[test]
    fn triplets_sum_duplicates_and_prune_zeros() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 0, -1.0), (1, 0, 2.0), (1, 0, 1.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn try_new_rejects_bad_structure() {
        assert!(SparseMatrix::try_new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(SparseMatrix::try_new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn transpose_round_trip() {
        let a = small();
        let at = a.transpose();
        assert_eq!(at.get(0, 2), 4.0);
        assert_eq!(at.get(2, 0), -1.0);
        assert_eq!(at.transpose(), a);
        assert!(!a.is_symmetric());
        assert!(SparseMatrix::identity(4).is_symmetric());
    }

    #[test]
    fn dense_operator_matches_sparse() {
        let a = small();
        let d = a.to_dense();
        let x = [0.5, -1.0, 2.0];
        let mut y1 = [0.0; 3];
        let mut y2 = [0.0; 3];
        LinearOperator::apply(&a, &x, &mut y1);
        LinearOperator::apply(&d, &x, &mut y2);
        assert_eq!(y1, y2);
        LinearOperator::apply_transpose(&a, &x, &mut y1);
        LinearOperator::apply_transpose(&d, &x, &mut y2);
        assert_eq!(y1, y2);
        assert_eq!(SparseMatrix::from_dense(&d), a);
    }
}
