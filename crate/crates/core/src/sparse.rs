//! Compressed sparse row storage for the assembled FEM matrices.

use std::collections::BTreeMap;
use std::io::Write;

/// Sparse square matrix in CSR form holding both triangles.
///
/// Assembled stiffness and mass matrices are symmetric; [`Self::is_symmetric`]
/// checks that up to a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` contributions, summing duplicates.
#[derive(Debug, Default)]
pub struct TripletBuilder {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        *self.entries.entry((row, col)).or_insert(0.0) += value;
    }

    pub fn build(self) -> SparseSymMatrix {
        let mut row_ptr = vec![0; self.dim + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        for (&(r, c), &v) in &self.entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseSymMatrix {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseSymMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Stored entries of one row as `(col, value)` pairs.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.row(row).map(|(_, v)| v).sum()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries()
            .all(|(r, c, v)| (v - self.get(c, r)).abs() <= tol * (1.0 + v.abs()))
    }

    /// Adds `delta` to a single stored or new entry. Only used to inject faults
    /// in self-checks.
    pub fn perturb(&mut self, row: usize, col: usize, delta: f64) {
        let mut builder = TripletBuilder::new(self.dim);
        for (r, c, v) in self.entries() {
            builder.add(r, c, v);
        }
        builder.add(row, col, delta);
        *self = builder.build();
    }

    /// Writes the matrix in MatrixMarket coordinate format (general, real,
    /// 1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.dim, self.dim, self.nnz())?;
        for (r, c, v) in self.entries() {
            writeln!(out, "{} {} {:e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}
