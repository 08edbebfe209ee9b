//! Storage types for the operators of the wafer model.
//!
//! All matrices store binary32 values. Dense matrices are row-major, sparse
//! matrices use a compressed-row layout and the diagonal operator keeps only
//! its main diagonal.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("dense matrix {rows}x{cols} expects {expected} values, got {got}")]
    DenseLength {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("csr row offsets must have {expected} entries, got {got}")]
    RowOffsets { expected: usize, got: usize },
    #[error("csr row {row}: {reason}")]
    CsrRow { row: usize, reason: &'static str },
    #[error("row window {start}..{end} exceeds {rows} rows")]
    Window { start: usize, end: usize, rows: usize },
}

/// Row-major dense binary32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Dense {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DenseLength {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn view(&self) -> DenseView<'_> {
        DenseView {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }

    /// Borrow a contiguous window of rows without copying.
    pub fn row_window(&self, rows: Range<usize>) -> Result<DenseView<'_>, MatrixError> {
        self.view().row_window(rows)
    }
}

/// Borrowed row-major matrix; row windows of a parent alias its storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseView<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f32],
}

impl<'a> DenseView<'a> {
    pub fn new(rows: usize, cols: usize, data: &'a [f32]) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DenseLength {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &'a [f32] {
        self.data
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_window(&self, rows: Range<usize>) -> Result<DenseView<'a>, MatrixError> {
        if rows.start > rows.end || rows.end > self.rows {
            return Err(MatrixError::Window {
                start: rows.start,
                end: rows.end,
                rows: self.rows,
            });
        }
        Ok(DenseView {
            rows: rows.end - rows.start,
            cols: self.cols,
            data: &self.data[rows.start * self.cols..rows.end * self.cols],
        })
    }

    pub fn to_owned(&self) -> Dense {
        Dense {
            rows: self.rows,
            cols: self.cols,
            data: self.data.to_vec(),
        }
    }
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f32>,
}

impl Csr {
    /// Builds a CSR matrix, checking offsets and strictly increasing column
    /// indices within each row.
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f32>,
    ) -> Result<Self, MatrixError> {
        if row_offsets.len() != rows + 1 {
            return Err(MatrixError::RowOffsets {
                expected: rows + 1,
                got: row_offsets.len(),
            });
        }
        if row_offsets[0] != 0
            || row_offsets[rows] != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(MatrixError::CsrRow {
                row: 0,
                reason: "offsets do not span the index and value arrays",
            });
        }
        for r in 0..rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi || hi > col_indices.len() {
                return Err(MatrixError::CsrRow {
                    row: r,
                    reason: "row offsets decrease",
                });
            }
            let cols_in_row = &col_indices[lo..hi];
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MatrixError::CsrRow {
                    row: r,
                    reason: "column indices not strictly increasing",
                });
            }
            if cols_in_row.iter().any(|&c| c as usize >= cols) {
                return Err(MatrixError::CsrRow {
                    row: r,
                    reason: "column index out of range",
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from per-row `(column, value)` lists; columns are sorted.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f32)>>) -> Result<Self, MatrixError> {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                idx.push(c);
                vals.push(v);
            }
            offsets.push(idx.len());
        }
        Self::new(n, cols, offsets, idx, vals)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_offsets
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Dense {
        let mut d = Dense::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                d.data[i * self.cols + c as usize] = v;
            }
        }
        d
    }
}

/// Diagonal operator; only the main diagonal is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal {
    values: Vec<f32>,
}

impl Diagonal {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_rejects_unsorted_columns() {
        let err = Csr::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, MatrixError::CsrRow { row: 0, .. }));
    }

    #[test]
    fn row_window_aliases_parent() {
        let d = Dense::from_fn(4, 3, |i, j| (i * 3 + j) as f32);
        let w = d.row_window(1..3).unwrap();
        assert_eq!(w.rows(), 2);
        assert_eq!(w.cols(), 3);
        assert_eq!(w.data().as_ptr(), d.row(1).as_ptr());
        assert!(d.row_window(3..5).is_err());
    }

    #[test]
    fn csr_round_trips_through_dense() {
        let csr = Csr::from_rows(3, vec![vec![(2, 1.5), (0, -1.0)], vec![], vec![(1, 2.0)]]).unwrap();
        let d = csr.to_dense();
        assert_eq!(d.data(), &[-1.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(csr.max_row_nnz(), 2);
    }
}
