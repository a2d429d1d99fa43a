//! Symmetric positive definite banded storage with an in-place Cholesky factorization.

use crate::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores entries `(i, i - k)` for
/// `k` in `0..=half_bandwidth` at `data[i * (half_bandwidth + 1) + k]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    hb: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Self {
        Self {
            n,
            hb: half_bandwidth,
            data: vec![0.0; n * (half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    /// Adds `v` to entry `(i, j)`; entries in the upper triangle are ignored.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if j > i {
            return;
        }
        let k = i - j;
        assert!(k <= self.hb, "entry ({i}, {j}) outside band {}", self.hb);
        self.data[i * (self.hb + 1) + k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let k = i - j;
        if k > self.hb {
            0.0
        } else {
            self.data[i * (self.hb + 1) + k]
        }
    }

    /// y = A x using the symmetric band.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.hb + 1)..(i + 1) * (self.hb + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.hb.min(i) {
                let j = i - k;
                let a = row[k];
                if a != 0.0 {
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Factors `A = L Lᵀ`. A pivot below `rel_tol * max|diag|` is reported as
    /// a singular system.
    pub fn cholesky(&self, rel_tol: f64) -> Result<BandedCholesky> {
        let n = self.n;
        let hb = self.hb;
        let w = hb + 1;
        let max_diag = (0..n)
            .map(|i| self.data[i * w].abs())
            .fold(0.0_f64, f64::max);
        if n == 0 {
            return Ok(BandedCholesky { n, hb, l: Vec::new() });
        }
        if max_diag == 0.0 {
            return Err(Error::Solver("zero stiffness matrix".into()));
        }
        let mut l = self.data.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(hb);
            for j in j0..=i {
                // l[i][j] = (a[i][j] - sum_{m} l[i][m] l[j][m]) / l[j][j]
                let m0 = j0.max(j.saturating_sub(hb));
                let mut s = l[i * w + (i - j)];
                for m in m0..j {
                    s -= l[i * w + (i - m)] * l[j * w + (j - m)];
                }
                if i == j {
                    if s <= rel_tol * max_diag {
                        return Err(Error::Solver(format!(
                            "matrix is singular or indefinite at equation {i} (pivot {s:e})"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandedCholesky { n, hb, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    hb: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let w = self.hb + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for m in i.saturating_sub(self.hb)..i {
                s -= self.l[i * w + (i - m)] * y[m];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for m in i + 1..(i + w).min(self.n) {
                s -= self.l[m * w + (m - i)] * y[m];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}
