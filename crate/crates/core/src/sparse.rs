//! Compressed sparse row matrices and the sparse-dense product.

use rayon::prelude::*;

use crate::dense::{axpy, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square or rectangular CSR matrix with sorted column indices within each row.
///
/// Column indices are 32-bit; graphs are limited to `u32::MAX` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(Error::Dimension("row pointer length must be n_rows + 1".into()));
        }
        if *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::Dimension("row pointer does not cover the index arrays".into()));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::Dimension(format!("row pointer decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Dimension(format!("row {r} columns not strictly increasing")));
            }
            if cols.iter().any(|&c| c as usize >= n_cols) {
                return Err(Error::Dimension(format!("row {r} has a column out of range")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Builds from unsorted triplets; duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Dimension(format!("triplet ({r}, {c}) out of range")));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c as u32);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_parts(n_rows, n_cols, row_ptr, col_idx, values)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_values(&self, r: usize) -> &[T] {
        &self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_len(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let cols = self.row_cols(r);
        match cols.binary_search(&(c as u32)) {
            Ok(p) => self.row_values(r)[p],
            Err(_) => T::zero(),
        }
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (&c, &v) in self.row_cols(r).iter().zip(self.row_values(r)) {
                out.set(r, c as usize, v);
            }
        }
        out
    }

    /// Accumulates row `r` of `self * dense` into `out`, columns ascending.
    #[inline]
    pub fn row_times(&self, r: usize, dense: &DenseMatrix<T>, out: &mut [T]) {
        for (&c, &v) in self.row_cols(r).iter().zip(self.row_values(r)) {
            axpy(out, v, dense.row(c as usize));
        }
    }
}

/// Exact sparse-dense product `matrix * dense`.
///
/// Each output row is summed in ascending column order, so the result does
/// not depend on the thread count.
pub fn spmm<T: Real>(matrix: &CsrMatrix<T>, dense: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if matrix.n_cols() != dense.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} sparse by {}x{} dense",
            matrix.n_rows(),
            matrix.n_cols(),
            dense.rows(),
            dense.cols()
        )));
    }
    let d = dense.cols();
    let mut out = DenseMatrix::zeros(matrix.n_rows(), d);
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, row)| matrix.row_times(r, dense, row));
    Ok(out)
}
