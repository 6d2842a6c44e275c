//! Compressed sparse row storage for data matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays. Column indices must be strictly
    /// increasing within each row.
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(SolverError::invalid(
                "indptr must have nrows + 1 entries starting at 0",
            ));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(SolverError::invalid("indptr/indices/values lengths disagree"));
        }
        for r in 0..nrows {
            let (lo, hi) = (indptr[r], indptr[r + 1]);
            if lo > hi {
                return Err(SolverError::invalid("indptr must be nondecreasing"));
            }
            let row = &indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SolverError::invalid(format!(
                    "row {r}: column indices not strictly increasing"
                )));
            }
            if row.iter().any(|&c| c >= ncols) {
                return Err(SolverError::invalid(format!(
                    "row {r}: column index out of range"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            if row.len() != ncols {
                return Err(SolverError::invalid("ragged dense rows"));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::new(nrows, ncols, indptr, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `Aᵀ y`
    pub fn mul_t_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|r| {
                let mut row = vec![0.0; self.ncols];
                for (c, v) in self.row(r) {
                    row[c] = v;
                }
                row
            })
            .collect()
    }

    /// Largest singular value by power iteration on `AᵀA`, stopping when the
    /// relative change of the Rayleigh estimate drops below `tol`.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> f64 {
        let n = self.ncols;
        if n == 0 || self.nnz() == 0 {
            return 0.0;
        }
        // Deterministic, non-symmetric start vector.
        let mut v: Vec<f64> = (0..n).map(|j| 1.0 + (j % 7) as f64 / 10.0).collect();
        let nv = crate::linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut sigma_sq = 0.0;
        for _ in 0..max_iter {
            let w = self.mul_t_vec(&self.mul_vec(&v));
            let est = crate::linalg::dot(&v, &w);
            let nw = crate::linalg::norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|x| x / nw).collect();
            let done = (est - sigma_sq).abs() <= tol * est.abs();
            sigma_sq = est;
            if done {
                break;
            }
        }
        sigma_sq.sqrt()
    }
}
