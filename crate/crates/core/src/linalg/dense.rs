use std::ops::{Index, IndexMut};

use super::par;
use crate::error::{check_len, Error, Result};

/// Row-major dense matrix for the spectral harness and coarse solves.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), n_cols, |i, j| rows[i][j])
    }

    pub fn diag_from(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|i| super::dot(self.row(i), x)).collect()
    }

    /// `self * other`, parallel over output rows.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_len("matmul inner dimension", self.n_cols, other.n_rows)?;
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        let nc = other.n_cols;
        par::for_each_chunk(&mut out.data, nc, |i, row| {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    let orow = other.row(k);
                    for j in 0..nc {
                        row[j] += a * orow[j];
                    }
                }
            }
        });
        Ok(out)
    }

    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        check_len("add rows", self.n_rows, other.n_rows)?;
        check_len("add cols", self.n_cols, other.n_cols)?;
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Adds `alpha * u v^T` in place.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        for i in 0..self.n_rows {
            let ui = alpha * u[i];
            if ui != 0.0 {
                for j in 0..self.n_cols {
                    self[(i, j)] += ui * v[j];
                }
            }
        }
    }

    /// Assembles `[[a, b], [c, d]]`.
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        check_len("block rows", a.n_rows, b.n_rows)?;
        check_len("block rows", c.n_rows, d.n_rows)?;
        check_len("block cols", a.n_cols, c.n_cols)?;
        check_len("block cols", b.n_cols, d.n_cols)?;
        let (n1, m1) = (a.n_rows, a.n_cols);
        let mut out = Self::zeros(a.n_rows + c.n_rows, a.n_cols + b.n_cols);
        for i in 0..out.n_rows {
            for j in 0..out.n_cols {
                out[(i, j)] = match (i < n1, j < m1) {
                    (true, true) => a[(i, j)],
                    (true, false) => b[(i, j - m1)],
                    (false, true) => c[(i - n1, j)],
                    (false, false) => d[(i - n1, j - m1)],
                };
            }
        }
        Ok(out)
    }

    /// Principal submatrix on `idx` (rows and columns).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> Result<(usize, usize, f64)> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                what: "square matrix",
                expected: self.n_rows,
                got: self.n_cols,
            });
        }
        let mut worst = (0, 0, 0.0);
        for i in 0..self.n_rows {
            for j in i + 1..self.n_cols {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst.2 {
                    worst = (i, j, d);
                }
            }
        }
        Ok(worst)
    }

    /// Averages with the transpose.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n_rows, self.n_cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Lower Cholesky factor `L` with `A = L L^T`.
    pub fn cholesky(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                what: "Cholesky of square matrix",
                expected: self.n_rows,
                got: self.n_cols,
            });
        }
        let n = self.n_rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= l.data[ri + k] * l.data[rj + k];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Solves `L y = b` for lower-triangular `self`.
    pub fn forward_substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n_rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.row(i);
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `L^T x = y` for lower-triangular `self`.
    pub fn backward_substitute_transpose(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n_rows;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self[(k, i)] * x[k];
            }
            x[i] = s / self[(i, i)];
        }
        x
    }

    /// Solves `A x = b` given the Cholesky factor of `A`.
    pub fn cholesky_solve(l: &Self, b: &[f64]) -> Vec<f64> {
        let y = l.forward_substitute(b);
        l.backward_substitute_transpose(&y)
    }

    /// `L^{-1} X` column by column.
    pub fn forward_substitute_matrix(&self, x: &Self) -> Self {
        let n = self.n_rows;
        let m = x.n_cols;
        let mut out = x.clone();
        for i in 0..n {
            let lii = self[(i, i)];
            for k in 0..i {
                let lik = self[(i, k)];
                if lik != 0.0 {
                    for j in 0..m {
                        let v = out.data[k * m + j];
                        out.data[i * m + j] -= lik * v;
                    }
                }
            }
            for j in 0..m {
                out.data[i * m + j] /= lii;
            }
        }
        out
    }

    /// LU factorization with partial pivoting, solving for every column of `rhs`.
    pub fn lu_solve_many(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                what: "LU of square matrix",
                expected: self.n_rows,
                got: self.n_cols,
            });
        }
        check_len("LU right-hand side", self.n_rows, rhs.n_rows)?;
        let n = self.n_rows;
        let m = rhs.n_cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
                .unwrap();
            if a[(p, k)].abs() <= 1e-300 * scale {
                return Err(Error::Singular(k));
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                for j in 0..m {
                    b.data.swap(k * m + j, p * m + j);
                }
            }
            let piv = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                if f != 0.0 {
                    for j in k..n {
                        a.data[i * n + j] -= f * a.data[k * n + j];
                    }
                    for j in 0..m {
                        b.data[i * m + j] -= f * b.data[k * m + j];
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for j in 0..m {
                let mut s = b.data[i * m + j];
                for k in i + 1..n {
                    s -= a.data[i * n + k] * b.data[k * m + j];
                }
                b.data[i * m + j] = s / a.data[i * n + i];
            }
        }
        Ok(b)
    }

    pub fn lu_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let col = Self::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        Ok(self.lu_solve_many(&col)?.data)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.lu_solve_many(&Self::identity(self.n_rows))
    }

    /// Solves `A X = B` for SPD `A` via Cholesky.
    pub fn spd_solve_many(&self, rhs: &Self) -> Result<Self> {
        let l = self.cholesky()?;
        let y = l.forward_substitute_matrix(rhs);
        // back substitution on every column with L^T
        let n = self.n_rows;
        let m = rhs.n_cols;
        let mut x = y;
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = l[(k, i)];
                if lki != 0.0 {
                    for j in 0..m {
                        let v = x.data[k * m + j];
                        x.data[i * m + j] -= lki * v;
                    }
                }
            }
            let lii = l[(i, i)];
            for j in 0..m {
                x.data[i * m + j] /= lii;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0, 0.4], vec![2.0, 5.0, 1.0], vec![0.4, 1.0, 3.0]]);
        let l = a.cholesky().unwrap();
        let llt = l.matmul(&l.transpose()).unwrap();
        assert!(llt.add_scaled(1.0, &a, -1.0).unwrap().max_abs() < 1e-14);
        let x = DenseMatrix::cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn lu_inverse_with_pivoting() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv).unwrap();
        assert!(id.add_scaled(1.0, &DenseMatrix::identity(2), -1.0).unwrap().max_abs() < 1e-15);
        let s = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(s.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn spd_solve_many_matches_lu() {
        let a = DenseMatrix::from_fn(5, 5, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let b = DenseMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let x1 = a.spd_solve_many(&b).unwrap();
        let x2 = a.lu_solve_many(&b).unwrap();
        assert!(x1.add_scaled(1.0, &x2, -1.0).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn block_assembly() {
        let a = DenseMatrix::identity(1);
        let b = DenseMatrix::from_rows(&[vec![2.0, 3.0]]);
        let c = b.transpose();
        let d = DenseMatrix::identity(2).scaled(-1.0);
        let m = DenseMatrix::block2x2(&a, &b, &c, &d).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.row(2), &[3.0, 0.0, -1.0]);
    }
}
