//! Small dense row-major matrices and a Householder QR.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (jj, &j) in idx.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Householder QR of a tall matrix, stored compactly.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Householder vectors below the diagonal; R on and above it.
    packed: Matrix,
    /// Scalar `beta_j` of each reflector `I - beta v v^T`.
    betas: Vec<f64>,
}

impl Qr {
    pub fn decompose(a: &Matrix) -> Qr {
        let (m, n) = (a.nrows(), a.ncols());
        let mut packed = a.clone();
        let mut betas = vec![0.0; n];
        for j in 0..n.min(m) {
            let norm = (j..m).map(|i| packed[(i, j)].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if packed[(j, j)] > 0.0 { -norm } else { norm };
            let v0 = packed[(j, j)] - alpha;
            // v = [1, x_{j+1}/v0, ...], beta = -v0 / alpha
            for i in j + 1..m {
                packed[(i, j)] /= v0;
            }
            let beta = -v0 / alpha;
            betas[j] = beta;
            packed[(j, j)] = alpha;
            for c in j + 1..n {
                let mut dot = packed[(j, c)];
                for i in j + 1..m {
                    dot += packed[(i, j)] * packed[(i, c)];
                }
                dot *= beta;
                packed[(j, c)] -= dot;
                for i in j + 1..m {
                    let vi = packed[(i, j)];
                    packed[(i, c)] -= dot * vi;
                }
            }
        }
        Qr { packed, betas }
    }

    pub fn ncols(&self) -> usize {
        self.packed.ncols()
    }

    pub fn r_diag(&self, j: usize) -> f64 {
        self.packed[(j, j)]
    }

    /// Applies `Q^T` to `b` in place.
    pub fn apply_qt(&self, b: &mut [f64]) {
        let m = self.packed.nrows();
        for j in 0..self.ncols().min(m) {
            let beta = self.betas[j];
            if beta == 0.0 {
                continue;
            }
            let mut dot = b[j];
            for i in j + 1..m {
                dot += self.packed[(i, j)] * b[i];
            }
            dot *= beta;
            b[j] -= dot;
            for i in j + 1..m {
                b[i] -= dot * self.packed[(i, j)];
            }
        }
    }

    /// Solves `R x = c` for the leading `n` entries of `c`.
    pub fn solve_r(&self, c: &[f64]) -> Vec<f64> {
        let n = self.ncols();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = c[i];
            for k in i + 1..n {
                s -= self.packed[(i, k)] * x[k];
            }
            x[i] = s / self.packed[(i, i)];
        }
        x
    }

    /// `(R^T R)^{-1} = R^{-1} R^{-T}`, i.e. `(A^T A)^{-1}`.
    pub fn inverse_gram(&self) -> Matrix {
        let n = self.ncols();
        let mut r_inv = Matrix::zeros(n, n);
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let x = self.solve_r(&e);
            r_inv.set_column(col, &x);
        }
        r_inv.matmul(&r_inv.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_square_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let qr = Qr::decompose(&a);
        let mut b = vec![3.0, 5.0];
        qr.apply_qt(&mut b);
        let x = qr.solve_r(&b);
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn inverse_gram_matches_closed_form() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let inv = Qr::decompose(&a).inverse_gram();
        // A^T A = [[3,3],[3,5]], inverse = [[5,-3],[-3,3]] / 6
        let expected = [[5.0 / 6.0, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let g = a.transpose().matmul(&a);
        assert_eq!(g[(2, 1)], 6.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![6.0]);
    }
}
