//! Banded Cholesky factorisation.
//!
//! Interior nodes of the uniform mesh are numbered row by row, so the reduced
//! stiffness matrix has half-bandwidth `n_div`. A dense band factor costs
//! `O(N b²)` and is exact up to rounding, which keeps solver error far below
//! every subproblem tolerance.

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    dim: usize,
    bandwidth: usize,
    // Row-major lower band: entry (i, j) with i - bandwidth <= j <= i lives at
    // i * (bandwidth + 1) + (j + bandwidth - i).
    factor: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the principal submatrix of `matrix` selected by `dofs`.
    ///
    /// `dof_of_row[r]` maps a row of `matrix` to its position in the reduced
    /// system, or `None` if the row is eliminated.
    pub fn factor_submatrix(matrix: &SparseSymMatrix, dof_of_row: &[Option<usize>]) -> Result<Self> {
        let dim = dof_of_row.iter().flatten().count();
        let mut bandwidth = 0;
        for (r, c, _) in matrix.entries() {
            if let (Some(i), Some(j)) = (dof_of_row[r], dof_of_row[c]) {
                bandwidth = bandwidth.max(i.abs_diff(j));
            }
        }
        let width = bandwidth + 1;
        let mut factor = vec![0.0; dim * width];
        for (r, c, v) in matrix.entries() {
            if let (Some(i), Some(j)) = (dof_of_row[r], dof_of_row[c]) {
                if j <= i {
                    factor[i * width + (j + bandwidth - i)] = v;
                }
            }
        }
        let mut chol = Self {
            dim,
            bandwidth,
            factor,
        };
        chol.factorize()?;
        Ok(chol)
    }

    fn factorize(&mut self) -> Result<()> {
        let b = self.bandwidth;
        let w = b + 1;
        let l = &mut self.factor;
        for i in 0..self.dim {
            let row_start = i.saturating_sub(b);
            for j in row_start..=i {
                let k_start = row_start.max(j.saturating_sub(b));
                let mut sum = l[i * w + (j + b - i)];
                for k in k_start..j {
                    sum -= l[i * w + (k + b - i)] * l[j * w + (k + b - j)];
                }
                if j == i {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    l[i * w + b] = sum.sqrt();
                } else {
                    l[i * w + (j + b - i)] = sum / l[j * w + b];
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Solves `A x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let b = self.bandwidth;
        let w = b + 1;
        let l = &self.factor;
        for i in 0..self.dim {
            let mut sum = x[i];
            for k in i.saturating_sub(b)..i {
                sum -= l[i * w + (k + b - i)] * x[k];
            }
            x[i] = sum / l[i * w + b];
        }
        for i in (0..self.dim).rev() {
            let mut sum = x[i];
            for k in (i + 1)..(i + w).min(self.dim) {
                sum -= l[k * w + (i + b - k)] * x[k];
            }
            x[i] = sum / l[i * w + b];
        }
    }
}
