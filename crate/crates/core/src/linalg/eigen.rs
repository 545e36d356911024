//! Dense symmetric eigensolvers.
//!
//! [`jacobi_eigen`] is a cyclic Jacobi method with a threshold strategy. The
//! working matrix is kept as a full symmetric row-major array and the
//! accumulated rotations are stored transposed, so each rotation touches two
//! contiguous rows of the eigenvector array.
//!
//! [`dense_generalized_eig`] reduces `A x = lambda B x` with `B = L L^T` to
//! the standard problem for `L^{-1} A L^{-T}`.

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

/// Result of a Jacobi run.
#[derive(Debug, Clone)]
pub struct JacobiOutput {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`, if requested.
    pub vectors: Option<DenseMatrix>,
    /// Off-diagonal Frobenius norm before the first sweep and after each sweep.
    pub off_norms: Vec<f64>,
    /// Trace of the input matrix.
    pub trace: f64,
}

impl JacobiOutput {
    pub fn sweeps(&self) -> usize {
        self.off_norms.len().saturating_sub(1)
    }
}

fn off_norm(a: &DenseMatrix) -> f64 {
    let n = a.n_rows();
    let mut s = 0.0;
    for i in 0..n {
        let row = a.row(i);
        for (j, v) in row.iter().enumerate() {
            if j != i {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    let (row, col, diff) = a.asymmetry()?;
    let scale = a.max_abs().max(1.0);
    if diff > 1e-12 * scale {
        return Err(Error::NotSymmetric { row, col, diff });
    }
    Ok(())
}

/// Eigenvalues (and optionally eigenvectors) of a symmetric matrix.
pub fn jacobi_eigen(a: &DenseMatrix, want_vectors: bool) -> Result<JacobiOutput> {
    check_symmetric(a)?;
    if !super::all_finite(a.as_slice()) {
        return Err(Error::NonFinite("jacobi input"));
    }
    let n = a.n_rows();
    let mut w = a.symmetrized();
    let trace: f64 = w.diag().iter().sum();
    let mut vt = if want_vectors {
        Some(DenseMatrix::identity(n))
    } else {
        None
    };
    let scale = w.frobenius();
    let mut off_norms = vec![off_norm(&w)];
    let target = f64::EPSILON * scale;

    for sweep in 0..MAX_SWEEPS {
        if *off_norms.last().unwrap() <= target || n < 2 {
            break;
        }
        // threshold used during the first sweeps only
        let thresh = if sweep < 3 {
            0.2 * off_norms.last().unwrap() / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh || apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, p, q, c, s, t, apq);
                if let Some(v) = vt.as_mut() {
                    rotate_rows(v, p, q, c, s);
                }
            }
        }
        off_norms.push(off_norm(&w));
    }
    if *off_norms.last().unwrap() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotConverged {
            solver: "jacobi",
            iterations: off_norms.len() - 1,
            residual: *off_norms.last().unwrap(),
            history: off_norms,
        });
    }

    let d = w.diag();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = vt.map(|v| DenseMatrix::from_fn(n, n, |i, k| v[(order[k], i)]));
    Ok(JacobiOutput {
        values,
        vectors,
        off_norms,
        trace,
    })
}

/// Applies the Jacobi rotation annihilating `a[p][q]` to the symmetric array.
fn rotate(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = a.n_rows();
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(p, k)];
        let akq = a[(q, k)];
        let np = c * akp - s * akq;
        let nq = s * akp + c * akq;
        a[(p, k)] = np;
        a[(q, k)] = nq;
        a[(k, p)] = np;
        a[(k, q)] = nq;
    }
}

fn rotate_rows(v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = v.n_cols();
    for k in 0..n {
        let vp = v[(p, k)];
        let vq = v[(q, k)];
        v[(p, k)] = c * vp - s * vq;
        v[(q, k)] = s * vp + c * vq;
    }
}

/// Generalized symmetric-definite eigenproblem `A x = lambda B x`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    /// B-orthonormal eigenvectors as columns, if requested.
    pub vectors: Option<DenseMatrix>,
    /// Off-diagonal norm history of the reduced Jacobi run.
    pub off_norms: Vec<f64>,
    /// Trace of the reduced matrix `L^{-1} A L^{-T}`.
    pub reduced_trace: f64,
}

impl GeneralizedEigen {
    /// Largest scaled residual `|A v - lambda B v| / ((|A|_F + |lambda| |B|_F) |v|)`.
    pub fn max_residual(&self, a: &DenseMatrix, b: &DenseMatrix) -> Option<f64> {
        let v = self.vectors.as_ref()?;
        let (na, nb) = (a.frobenius(), b.frobenius());
        let n = a.n_rows();
        let mut worst: f64 = 0.0;
        for (k, &lam) in self.values.iter().enumerate() {
            let x: Vec<f64> = (0..n).map(|i| v[(i, k)]).collect();
            let ax = a.matvec(&x);
            let bx = b.matvec(&x);
            let r: f64 = ax
                .iter()
                .zip(&bx)
                .map(|(p, q)| (p - lam * q).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = (na + lam.abs() * nb) * super::norm2(&x);
            worst = worst.max(r / scale.max(f64::MIN_POSITIVE));
        }
        Some(worst)
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }
}

/// Sorted eigenvalues of `B^{-1} A` for symmetric `A` and SPD `B`.
pub fn dense_generalized_eig(
    a: &DenseMatrix,
    b: &DenseMatrix,
    want_vectors: bool,
) -> Result<GeneralizedEigen> {
    check_symmetric(a)?;
    check_symmetric(b)?;
    crate::error::check_len("pencil dimension", a.n_rows(), b.n_rows())?;
    let l = b.symmetrized().cholesky()?;
    let w = l.forward_substitute_matrix(a);
    let c = l.forward_substitute_matrix(&w.transpose()).symmetrized();
    let reduced_trace = c.diag().iter().sum();
    let out = jacobi_eigen(&c, want_vectors)?;
    let vectors = match out.vectors {
        Some(y) => {
            let n = a.n_rows();
            let mut x = DenseMatrix::zeros(n, n);
            for k in 0..n {
                let col: Vec<f64> = (0..n).map(|i| y[(i, k)]).collect();
                let xk = l.backward_substitute_transpose(&col);
                for i in 0..n {
                    x[(i, k)] = xk[i];
                }
            }
            Some(x)
        }
        None => None,
    };
    Ok(GeneralizedEigen {
        values: out.values,
        vectors,
        off_norms: out.off_norms,
        reduced_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        g.add_scaled(0.5, &g.transpose(), 0.5).unwrap()
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        g.matmul(&g.transpose())
            .unwrap()
            .add_scaled(1.0, &DenseMatrix::identity(n), 0.5)
            .unwrap()
    }

    /// Number of eigenvalues of the pencil below `s`, from the inertia of
    /// `A - s B` (Sylvester), via an LDL^T without pivoting.
    fn count_below(a: &DenseMatrix, b: &DenseMatrix, s: f64) -> usize {
        let n = a.n_rows();
        let m = a.add_scaled(1.0, b, -s).unwrap();
        let mut work = m.clone();
        let mut neg = 0;
        for k in 0..n {
            let d = work[(k, k)];
            if d < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let f = work[(i, k)] / d;
                for j in k + 1..n {
                    let v = work[(k, j)];
                    work[(i, j)] -= f * v;
                }
            }
        }
        neg
    }

    /// Bisection on the eigenvalue count, an oracle independent of Jacobi.
    fn bisect_eigs(a: &DenseMatrix, b: &DenseMatrix, lo: f64, hi: f64) -> Vec<f64> {
        let n = a.n_rows();
        (0..n)
            .map(|k| {
                let (mut l, mut h) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (l + h);
                    if count_below(a, b, mid) > k {
                        h = mid;
                    } else {
                        l = mid;
                    }
                }
                0.5 * (l + h)
            })
            .collect()
    }

    #[test]
    fn diagonal_matrix() {
        let a = DenseMatrix::diag_from(&[3.0, 1.0, 2.0]);
        let out = jacobi_eigen(&a, true).unwrap();
        assert_eq!(out.values, vec![1.0, 2.0, 3.0]);
        let g = dense_generalized_eig(&a, &DenseMatrix::identity(3), false).unwrap();
        assert_eq!(g.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn equal_pencil_gives_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_spd(7, &mut rng);
        let g = dense_generalized_eig(&b, &b, false).unwrap();
        for v in g.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_inertia_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_sym(6, &mut rng);
            let b = random_spd(6, &mut rng);
            let g = dense_generalized_eig(&a, &b, true).unwrap();
            let oracle = bisect_eigs(&a, &b, -100.0, 100.0);
            for (x, y) in g.values.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
            assert!(g.max_residual(&a, &b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sym(20, &mut rng);
        let out = jacobi_eigen(&a, false).unwrap();
        let na = nalgebra::DMatrix::from_row_slice(20, 20, a.as_slice());
        let mut ev: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (x, y) in out.values.iter().zip(&ev) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn off_norm_decreases_and_trace_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_sym(30, &mut rng);
        let out = jacobi_eigen(&a, true).unwrap();
        for w in out.off_norms.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let s: f64 = out.values.iter().sum();
        assert!((s - out.trace).abs() <= 1e-10 * out.trace.abs().max(1.0));
        let v = out.vectors.unwrap();
        let vtv = v.transpose().matmul(&v).unwrap();
        assert!(vtv.add_scaled(1.0, &DenseMatrix::identity(30), -1.0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rejects_nonsymmetric_and_indefinite_b() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(jacobi_eigen(&a, false), Err(Error::NotSymmetric { .. })));
        let b = DenseMatrix::diag_from(&[1.0, -1.0]);
        let s = DenseMatrix::identity(2);
        assert!(matches!(
            dense_generalized_eig(&s, &b, false),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
