use super::dense::DenseMatrix;
use super::par;
use super::LinearOperator;
use crate::error::{check_len, Error, Result};

/// Dense expansion guard used by [`CsrMatrix::to_dense`].
pub const DENSE_ENTRY_LIMIT: usize = 4_000_000;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw CSR arrays, validating the structure.
    pub fn from_raw(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("row offsets", n_rows + 1, row_offsets.len())?;
        check_len("values", col_indices.len(), values.len())?;
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidArgument("row offsets do not span the index array".into()));
        }
        for i in 0..n_rows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::InvalidArgument(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::InvalidArgument(format!(
                    "column indices of row {i} not strictly increasing or out of range"
                )));
            }
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sparse values"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from (row, col, value) triplets, summing duplicates.
    ///
    /// Duplicates are summed after sorting by value, so the result does not
    /// depend on the order the triplets were produced in.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= n_rows || t.1 >= n_cols) {
            return Err(Error::InvalidArgument(format!(
                "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
            )));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::from_raw(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(columns, values)` of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        let mut s = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            s += v * x[*c];
        }
        s
    }

    /// `y = A x`, checked.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("spmv input", self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` with row-parallel dispatch for large matrices.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        par::for_each_row(y, |i| self.row_dot(i, x));
    }

    pub fn spmv_seq(&self, x: &[f64], y: &mut [f64]) {
        par::for_each_row_seq(y, |i| self.row_dot(i, x));
    }

    pub fn spmv_par(&self, x: &[f64], y: &mut [f64]) {
        par::for_each_row_par(y, |i| self.row_dot(i, x));
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let k = next[*c];
                col_indices[k] = i;
                values[k] = *v;
                next[*c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// `alpha * self + beta * other` on the union pattern.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        check_len("combination rows", self.n_rows, other.n_rows)?;
        check_len("combination cols", self.n_cols, other.n_cols)?;
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q >= cb.len() || (p < ca.len() && ca[p] < cb[q]);
                let take_b = p >= ca.len() || (q < cb.len() && cb[q] < ca[p]);
                if take_a {
                    col_indices.push(ca[p]);
                    values.push(alpha * va[p]);
                    p += 1;
                } else if take_b {
                    col_indices.push(cb[q]);
                    values.push(beta * vb[q]);
                    q += 1;
                } else {
                    col_indices.push(ca[p]);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// `diag(row_scale) * A * diag(col_scale)`, keeping the pattern.
    pub fn scale_rows_cols(&self, row_scale: &[f64], col_scale: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in out.row_offsets[i]..out.row_offsets[i + 1] {
                out.values[k] *= row_scale[i] * col_scale[out.col_indices[k]];
            }
        }
        out
    }

    /// Removes stored entries that are exactly zero.
    pub fn pruned(&self) -> Self {
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *v != 0.0 {
                    col_indices.push(*c);
                    values.push(*v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Largest `|a_ij - a_ji|` with its position, or `None` if not square.
    pub fn symmetry_defect(&self) -> Option<(usize, usize, f64)> {
        if self.n_rows != self.n_cols {
            return None;
        }
        let mut worst = (0, 0, 0.0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let d = (v - self.get(*c, i)).abs();
                if d > worst.2 {
                    worst = (i, *c, d);
                }
            }
        }
        Some(worst)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        matches!(self.symmetry_defect(), Some((_, _, d)) if d <= tol)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let entries = self.n_rows * self.n_cols;
        if entries > DENSE_ENTRY_LIMIT {
            return Err(Error::SizeGuard {
                entries,
                limit: DENSE_ENTRY_LIMIT,
            });
        }
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c)] = *v;
            }
        }
        Ok(d)
    }

    /// Sparse copy of the nonzero entries of a dense matrix.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..d.n_rows() {
            for j in 0..d.n_cols() {
                let v = d[(i, j)];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.n_rows(), d.n_cols(), trip).expect("dense entries are in range")
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y)
    }
}
