//! Growable lower-triangular factor of `K + lambda^2 I`.

use crate::error::{Error, Result};

/// Diagonal jitter tried, in order, when a pivot is not strictly positive.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular `L` with `L L^T = A`, stored row by row (row `i` holds `i + 1` entries).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LowerFactor {
    rows: Vec<Vec<f64>>,
}

impl LowerFactor {
    pub fn new() -> Self {
        LowerFactor { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.rows[i][j]
        }
    }

    /// Factorizes a dense symmetric matrix given through an entry accessor.
    pub fn factorize(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut f = LowerFactor { rows: Vec::with_capacity(n) };
        for i in 0..n {
            let col: Vec<f64> = (0..i).map(|j| entry(i, j)).collect();
            f.append(&col, entry(i, i))?;
        }
        Ok(f)
    }

    /// Extends the factor by one row and column: `cross[j] = A[n, j]` for `j < n`, `diag = A[n, n]`.
    pub fn append(&mut self, cross: &[f64], diag: f64) -> Result<()> {
        let n = self.dim();
        debug_assert_eq!(cross.len(), n);
        let mut row = self.forward_solve(cross);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let mut pivot = diag - sq;
        if !(pivot > 0.0) {
            let retry = JITTER_LADDER.iter().map(|j| diag + j - sq).find(|p| *p > 0.0);
            pivot = retry.ok_or_else(|| {
                Error::Numeric(format!(
                    "non-positive pivot {:e} at index {n} after jitter escalation",
                    diag - sq
                ))
            })?;
        }
        row.push(pivot.sqrt());
        self.rows.push(row);
        Ok(())
    }

    /// Solves `L x = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate().take(b.len()) {
            let s: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    /// Solves `L^T x = b`.
    pub fn backward_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, l) in self.rows[i][..i].iter().enumerate() {
                x[j] -= l * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward_solve(&self.forward_solve(b))
    }

    /// `sum_i ln L_ii = 1/2 ln det A`.
    pub fn half_log_det(&self) -> f64 {
        self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum()
    }
}
