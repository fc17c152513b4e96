//! Sparse matrices and the linear solvers used by every discrete step.

mod banded;
mod dense;
mod dirichlet;
mod solvers;

pub use banded::{reverse_cuthill_mckee, BandCholesky};
pub use dense::DenseCholesky;
pub use dirichlet::{apply_dirichlet, DirichletBc};
pub use solvers::{
    bicgstab, bicgstab_preconditioned, cg, solve, solve_from, NullSpace, SolveStats, SolverConfig, SolverMethod,
};

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{method} did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("{method} broke down after {iterations} iterations")]
    Breakdown { method: &'static str, iterations: usize },
    #[error("right-hand side inconsistent with the constant null space (relative defect {0:e})")]
    InconsistentRhs(f64),
    #[error("dof {dof} constrained to conflicting values {a} and {b}")]
    ConflictingConstraint { dof: usize, a: f64, b: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Unsorted `(row, col, value)` entries; duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer<T> {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Real> TripletBuffer<T> {
    pub fn new() -> Self {
        TripletBuffer {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        TripletBuffer {
            rows: Vec::with_capacity(n),
            cols: Vec::with_capacity(n),
            vals: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: T) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Appends all entries of `m` shifted by `(row_offset, col_offset)`.
    pub fn push_block(&mut self, m: &SparseMatrix<T>, row_offset: usize, col_offset: usize, scale: T) {
        for i in 0..m.n_rows {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                self.push(row_offset + i, col_offset + m.col_idx[k], scale * m.values[k]);
            }
        }
    }
}

/// Compressed sparse row matrix with strictly increasing columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

/// Compresses triplets into CSR, summing duplicates in insertion order.
pub fn to_sparse<T: Real>(
    buf: &TripletBuffer<T>,
    n_rows: usize,
    n_cols: usize,
) -> Result<SparseMatrix<T>, LinalgError> {
    if buf.rows.len() != buf.vals.len() || buf.cols.len() != buf.vals.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: buf.vals.len(),
            got: buf.rows.len().min(buf.cols.len()),
        });
    }
    let mut counts = vec![0usize; n_rows + 1];
    for (&r, &c) in buf.rows.iter().zip(&buf.cols) {
        if r >= n_rows || c >= n_cols {
            return Err(LinalgError::IndexOutOfRange {
                row: r,
                col: c,
                n_rows,
                n_cols,
            });
        }
        counts[r + 1] += 1;
    }
    for i in 0..n_rows {
        counts[i + 1] += counts[i];
    }
    // bucket by row, keeping insertion order inside each row
    let mut next = counts.clone();
    let mut order = vec![0usize; buf.len()];
    for (k, &r) in buf.rows.iter().enumerate() {
        order[next[r]] = k;
        next[r] += 1;
    }

    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    let mut col_idx = Vec::with_capacity(buf.len());
    let mut values = Vec::with_capacity(buf.len());
    row_ptr.push(0);
    let mut scratch: Vec<usize> = Vec::new();
    for i in 0..n_rows {
        scratch.clear();
        scratch.extend_from_slice(&order[counts[i]..counts[i + 1]]);
        // stable sort keeps duplicate summation order deterministic
        scratch.sort_by_key(|&k| buf.cols[k]);
        let mut last: Option<usize> = None;
        for &k in &scratch {
            let c = buf.cols[k];
            if last == Some(c) {
                *values.last_mut().unwrap() += buf.vals[k];
            } else {
                col_idx.push(c);
                values.push(buf.vals[k]);
                last = Some(c);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseMatrix {
        n_rows,
        n_cols,
        row_ptr,
        col_idx,
        values,
    })
}

impl<T: Real> SparseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => T::zero(),
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x` written into `y`.
    pub fn spmv_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix<T> {
        let mut buf = TripletBuffer::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                buf.push(j, i, v);
            }
        }
        to_sparse(&buf, self.n_cols, self.n_rows).expect("transpose indices in range")
    }

    pub fn scaled(&self, s: T) -> SparseMatrix<T> {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `alpha * self + beta * other`.
    pub fn add(&self, alpha: T, other: &SparseMatrix<T>, beta: T) -> Result<SparseMatrix<T>, LinalgError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows * self.n_cols,
                got: other.n_rows * other.n_cols,
            });
        }
        let mut buf = TripletBuffer::with_capacity(self.nnz() + other.nnz());
        buf.push_block(self, 0, 0, alpha);
        buf.push_block(other, 0, 0, beta);
        to_sparse(&buf, self.n_rows, self.n_cols)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Checked matrix-vector product.
pub fn spmv<T: Real>(a: &SparseMatrix<T>, x: &[T]) -> Result<Vec<T>, LinalgError> {
    if x.len() != a.n_cols {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_cols,
            got: x.len(),
        });
    }
    Ok(a.mul_vec(x))
}
