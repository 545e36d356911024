//! Active-set truncation `T`, `T^` and truncated operators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix, RankOneUpdated};

pub const DEFAULT_ACTIVE_TOL: f64 = 1e-12;

/// Diagonal 0/1 operators: `t[j] = 0` on active (truncated) nodes,
/// `that = 1 - t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMask {
    t: Vec<f64>,
    that: Vec<f64>,
    active_count: usize,
}

impl TruncationMask {
    pub fn from_active(active: &[bool]) -> Self {
        let t: Vec<f64> = active.iter().map(|&a| if a { 0.0 } else { 1.0 }).collect();
        let that = t.iter().map(|x| 1.0 - x).collect();
        Self {
            t,
            that,
            active_count: active.iter().filter(|&&a| a).count(),
        }
    }

    /// No truncation: `T = I`.
    pub fn empty(n: usize) -> Self {
        Self::from_active(&vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        Self::from_active(&vec![true; n])
    }

    /// Seeded mask truncating `round(fraction * n)` nodes.
    pub fn random(n: usize, fraction: f64, seed: u64) -> Self {
        let k = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut active = vec![false; n];
        for &i in &idx[..k] {
            active[i] = true;
        }
        Self::from_active(&active)
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn t_diag(&self) -> &[f64] {
        &self.t
    }

    pub fn that_diag(&self) -> &[f64] {
        &self.that
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.t[i] == 0.0
    }

    pub fn is_empty(&self) -> bool {
        self.active_count == 0
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_active(i)).collect()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_active(i)).collect()
    }

    /// `T x`
    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.t).map(|(a, b)| a * b).collect()
    }
}

/// Mask of nodes with `|u_j| >= 1 - tol`.
pub fn mask_from_iterate(u: &[f64], tol: f64) -> Result<TruncationMask> {
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0 + tol)) {
        return Err(Error::Infeasible {
            index,
            value,
            lower: -1.0,
            upper: 1.0,
        });
    }
    let active: Vec<bool> = u.iter().map(|v| v.abs() >= 1.0 - tol).collect();
    Ok(TruncationMask::from_active(&active))
}

/// `D_l A D_r` for 0/1 diagonals, dropping the zeroed entries.
fn mask_matrix(a: &CsrMatrix, rows: &[f64], cols: &[f64]) -> CsrMatrix {
    a.scale_rows_cols(rows, cols).pruned()
}

/// `T A T + T^` for a sparse matrix.
pub fn truncate_sparse(a: &CsrMatrix, mask: &TruncationMask) -> Result<CsrMatrix> {
    check_len("truncate rows", mask.n(), a.n_rows())?;
    check_len("truncate cols", mask.n(), a.n_cols())?;
    if mask.is_empty() {
        return Ok(a.clone());
    }
    let tat = mask_matrix(a, &mask.t, &mask.t);
    tat.linear_combination(1.0, &CsrMatrix::diagonal(&mask.that), 1.0)
}

/// `T A T + T^` for `A = S + u v^T`: the update becomes `(Tu)(Tv)^T`.
pub fn truncate_spd(a: &RankOneUpdated, mask: &TruncationMask) -> Result<RankOneUpdated> {
    RankOneUpdated::new(
        truncate_sparse(&a.base, mask)?,
        mask.apply_t(&a.u),
        mask.apply_t(&a.v),
    )
}

/// `T B`
pub fn truncate_rows(b: &CsrMatrix, mask: &TruncationMask) -> Result<CsrMatrix> {
    check_len("truncate_rows", mask.n(), b.n_rows())?;
    Ok(mask_matrix(b, &mask.t, &vec![1.0; b.n_cols()]))
}

/// `T B T` without the identity on truncated nodes.
pub fn compress_symmetric(b: &CsrMatrix, mask: &TruncationMask) -> Result<CsrMatrix> {
    check_len("compress rows", mask.n(), b.n_rows())?;
    check_len("compress cols", mask.n(), b.n_cols())?;
    Ok(mask_matrix(b, &mask.t, &mask.t))
}

/// Outcome of [`certify_m_matrix`]. `violation` names the first failed
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MMatrixCertificate {
    pub positive_diagonal: bool,
    pub nonpositive_offdiagonal: bool,
    pub weakly_dominant: bool,
    /// Every connected component of the matrix graph has a strictly
    /// diagonally dominant row.
    pub strict_row_per_component: bool,
    /// `min_ij (A^{-1})_ij >= -1e-12`, checked only for small matrices.
    pub inverse_nonnegative: Option<bool>,
    pub min_inverse_entry: Option<f64>,
    pub violation: Option<String>,
}

impl MMatrixCertificate {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

pub const INVERSE_CHECK_LIMIT: usize = 400;

/// Checks the sign pattern, (irreducible) diagonal dominance and, for
/// `n <= 400`, entrywise nonnegativity of the inverse.
pub fn certify_m_matrix(a: &CsrMatrix) -> MMatrixCertificate {
    let n = a.n_rows();
    let mut cert = MMatrixCertificate {
        positive_diagonal: true,
        nonpositive_offdiagonal: true,
        weakly_dominant: true,
        strict_row_per_component: true,
        inverse_nonnegative: None,
        min_inverse_entry: None,
        violation: None,
    };
    let fail = |cert: &mut MMatrixCertificate, msg: String| {
        if cert.violation.is_none() {
            cert.violation = Some(msg);
        }
    };
    if n != a.n_cols() {
        fail(&mut cert, "matrix is not square".into());
        return cert;
    }
    let mut strict = vec![false; n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut off = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                if v > 0.0 {
                    cert.nonpositive_offdiagonal = false;
                    fail(&mut cert, format!("positive off-diagonal entry a[{i},{j}] = {v:e}"));
                }
                off += v.abs();
            }
        }
        if !(diag > 0.0) {
            cert.positive_diagonal = false;
            fail(&mut cert, format!("nonpositive diagonal a[{i},{i}] = {diag:e}"));
        }
        let slack = diag - off;
        let tol = 1e-12 * diag.abs().max(off);
        if slack < -tol {
            cert.weakly_dominant = false;
            fail(&mut cert, format!("row {i} is not diagonally dominant"));
        }
        strict[i] = slack > tol;
    }

    // connected components of the off-diagonal graph
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = n_comp;
        while let Some(i) = stack.pop() {
            for &j in a.row(i).0 {
                if comp[j] == usize::MAX && a.get(i, j) != 0.0 {
                    comp[j] = n_comp;
                    stack.push(j);
                }
            }
        }
        n_comp += 1;
    }
    let mut has_strict = vec![false; n_comp];
    for i in 0..n {
        has_strict[comp[i]] |= strict[i];
    }
    if let Some(c) = has_strict.iter().position(|s| !s) {
        cert.strict_row_per_component = false;
        fail(
            &mut cert,
            format!("component {c} has no strictly dominant row (singular)"),
        );
    }

    if n <= INVERSE_CHECK_LIMIT {
        let check = a
            .to_dense()
            .and_then(|d| d.inverse())
            .map(|inv: DenseMatrix| inv.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(*v)));
        match check {
            Ok(min) if min.is_finite() => {
                let ok = min >= -1e-12;
                cert.inverse_nonnegative = Some(ok);
                cert.min_inverse_entry = Some(min);
                if !ok {
                    fail(&mut cert, format!("inverse has negative entry {min:e}"));
                }
            }
            _ => {
                cert.inverse_nonnegative = Some(false);
                fail(&mut cert, "matrix is singular".into());
            }
        }
    }
    cert
}
