use serde::{Deserialize, Serialize};

/// Coordinate-format sparse matrix. Duplicate entries add.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Triplets {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out += Aᵀ v`.
    pub fn mul_transpose_add(&self, v: &[f64], out: &mut [f64]) {
        for ((&r, &c), &a) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            out[c] += a * v[r];
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for ((&r, &c), &a) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[r] += a * x[c];
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for ((&r, &c), &a) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            d[r][c] += a;
        }
        d
    }

    pub fn from_dense(dense: &[Vec<f64>], n_cols: usize) -> Self {
        let mut t = Self::new(dense.len(), n_cols);
        for (r, row) in dense.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(r, c, v);
                }
            }
        }
        t
    }
}
