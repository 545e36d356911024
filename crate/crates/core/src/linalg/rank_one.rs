use super::{dense::DenseMatrix, sparse::CsrMatrix, LinearOperator};
use crate::error::{check_len, Result};

/// `base + u v^T` with a sparse base. The update is never formed.
#[derive(Debug, Clone)]
pub struct RankOneUpdated {
    pub base: CsrMatrix,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl RankOneUpdated {
    pub fn new(base: CsrMatrix, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_len("rank-one u", base.n_rows(), u.len())?;
        check_len("rank-one v", base.n_cols(), v.len())?;
        Ok(Self { base, u, v })
    }

    /// Symmetric update `base + z z^T`.
    pub fn symmetric(base: CsrMatrix, z: Vec<f64>) -> Result<Self> {
        Self::new(base, z.clone(), z)
    }

    /// No update: `u = v = 0`.
    pub fn plain(base: CsrMatrix) -> Self {
        let (r, c) = (base.n_rows(), base.n_cols());
        Self {
            base,
            u: vec![0.0; r],
            v: vec![0.0; c],
        }
    }

    pub fn n(&self) -> usize {
        self.base.n_rows()
    }

    pub fn has_update(&self) -> bool {
        self.u.iter().any(|x| *x != 0.0) && self.v.iter().any(|x| *x != 0.0)
    }

    pub fn diag(&self) -> Vec<f64> {
        self.base
            .diag()
            .iter()
            .zip(self.u.iter().zip(&self.v))
            .map(|(d, (u, v))| d + u * v)
            .collect()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.spmv_into(x, y);
        let s = super::dot(&self.v, x);
        if s != 0.0 {
            super::axpy(s, &self.u, y);
        }
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let mut d = self.base.to_dense()?;
        d.add_outer(1.0, &self.u, &self.v);
        Ok(d)
    }

    /// Galerkin product `P^T A P` for the piecewise-constant prolongation
    /// given by `aggregate[i]` (the coarse index of fine node `i`). Nodes
    /// with `aggregate[i] >= n_coarse` have a zero row in `P`.
    pub fn galerkin(&self, aggregate: &[usize], n_coarse: usize) -> Result<Self> {
        check_len("aggregate map", self.n(), aggregate.len())?;
        let mut trip = Vec::with_capacity(self.base.nnz());
        for i in 0..self.n() {
            let (cols, vals) = self.base.row(i);
            if aggregate[i] >= n_coarse {
                continue;
            }
            for (&j, &a) in cols.iter().zip(vals) {
                if aggregate[j] < n_coarse {
                    trip.push((aggregate[i], aggregate[j], a));
                }
            }
        }
        let base = CsrMatrix::from_triplets(n_coarse, n_coarse, trip)?;
        Ok(Self {
            base,
            u: restrict(&self.u, aggregate, n_coarse),
            v: restrict(&self.v, aggregate, n_coarse),
        })
    }

    /// One Gauss-Seidel sweep on `A x = b` (forward or backward), optionally
    /// projected onto `[lower, upper]`. Rows with zero diagonal are skipped.
    /// The update term is tracked through the running product `v^T x`.
    pub fn gauss_seidel(
        &self,
        b: &[f64],
        x: &mut [f64],
        backward: bool,
        bounds: Option<(&[f64], &[f64])>,
    ) {
        let n = self.n();
        let mut s = super::dot(&self.v, x);
        let visit = |i: usize, x: &mut [f64], s: &mut f64| {
            let (cols, vals) = self.base.row(i);
            let mut diag = 0.0;
            let mut acc = b[i];
            for (&j, &a) in cols.iter().zip(vals) {
                if j == i {
                    diag = a;
                } else {
                    acc -= a * x[j];
                }
            }
            let (ui, vi) = (self.u[i], self.v[i]);
            acc -= ui * (*s - vi * x[i]);
            diag += ui * vi;
            if diag == 0.0 {
                return;
            }
            let mut xi = acc / diag;
            if let Some((lo, hi)) = bounds {
                xi = xi.max(lo[i]).min(hi[i]);
            }
            *s += vi * (xi - x[i]);
            x[i] = xi;
        };
        if backward {
            for i in (0..n).rev() {
                visit(i, x, &mut s);
            }
        } else {
            for i in 0..n {
                visit(i, x, &mut s);
            }
        }
    }
}

/// `P^T x` for a piecewise-constant prolongation.
pub fn restrict(x: &[f64], aggregate: &[usize], n_coarse: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_coarse];
    for (xi, &a) in x.iter().zip(aggregate) {
        if a < n_coarse {
            out[a] += xi;
        }
    }
    out
}

/// `y += P x_c` for a piecewise-constant prolongation.
pub fn prolongate_add(xc: &[f64], aggregate: &[usize], y: &mut [f64]) {
    for (yi, &a) in y.iter_mut().zip(aggregate) {
        if a < xc.len() {
            *yi += xc[a];
        }
    }
}

impl LinearOperator for RankOneUpdated {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn apply_matches_dense() {
        let a = RankOneUpdated::new(lap1d(5), vec![1.0, 0.0, 2.0, 0.0, 1.0], vec![0.5; 5]).unwrap();
        let x = [1.0, -2.0, 3.0, 0.5, 0.25];
        let y = a.apply_vec(&x);
        let yd = a.to_dense().unwrap().matvec(&x);
        for (p, q) in y.iter().zip(&yd) {
            assert!((p - q).abs() < 1e-14);
        }
        assert_eq!(a.diag()[2], 3.0);
    }

    #[test]
    fn gauss_seidel_matches_dense_sweep() {
        let a = RankOneUpdated::symmetric(lap1d(4), vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let d = a.to_dense().unwrap();
        let b = [1.0, 2.0, 3.0, 4.0];
        let mut x = vec![0.1, 0.2, 0.3, 0.4];
        let mut xr = x.clone();
        a.gauss_seidel(&b, &mut x, false, None);
        for i in 0..4 {
            let mut acc = b[i];
            for j in 0..4 {
                if j != i {
                    acc -= d[(i, j)] * xr[j];
                }
            }
            xr[i] = acc / d[(i, i)];
        }
        for (p, q) in x.iter().zip(&xr) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn galerkin_matches_dense_triple_product() {
        let a = RankOneUpdated::new(lap1d(6), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![1.0; 6]).unwrap();
        let agg = [0, 0, 1, 1, 2, 2];
        let c = a.galerkin(&agg, 3).unwrap();
        let p = DenseMatrix::from_fn(6, 3, |i, j| if agg[i] == j { 1.0 } else { 0.0 });
        let pap = p
            .transpose()
            .matmul(&a.to_dense().unwrap())
            .unwrap()
            .matmul(&p)
            .unwrap();
        let diff = pap.add_scaled(1.0, &c.to_dense().unwrap(), -1.0).unwrap();
        assert!(diff.max_abs() < 1e-12);
    }
}
