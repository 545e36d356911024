//! Krylov solvers: flexible right-preconditioned restarted GMRES and
//! preconditioned conjugate gradients.

use super::{axpy, dot, norm2, LinearOperator, Preconditioner};
use crate::error::{check_len, Error, Result};

/// Arnoldi norms below this (relative to the cycle's starting residual) are
/// treated as an invariant subspace.
const HAPPY_BREAKDOWN: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iters: 300,
            rel_tol: 1e-7,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 {
            return Err(Error::InvalidArgument("GMRES restart must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "GMRES tolerance {} not in (0, 1)",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Number of operator applications inside Arnoldi.
    pub iterations: usize,
    pub converged: bool,
    /// True relative residual `|b - A x| / |b|` of the returned iterate.
    pub rel_residual: f64,
    /// Estimated relative residual after every Arnoldi step.
    pub history: Vec<f64>,
    /// The Krylov space became invariant before the tolerance was met.
    pub breakdown: bool,
}

/// Solves `A x = b` with right preconditioning `A P^{-1} (P x) = b`.
///
/// The preconditioned basis vectors `z_j = P^{-1} v_j` are stored, so the
/// preconditioner may vary between applications (flexible variant).
pub fn gmres<A, P>(
    op: &A,
    precond: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &GmresConfig,
) -> Result<GmresOutcome>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    cfg.validate()?;
    let n = op.dim();
    check_len("gmres rhs", n, b.len())?;
    check_len("gmres preconditioner", n, precond.dim())?;
    if !super::all_finite(b) {
        return Err(Error::NonFinite("gmres rhs"));
    }
    let mut x = match x0 {
        Some(x0) => {
            check_len("gmres initial guess", n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            converged: true,
            rel_residual: 0.0,
            history: vec![],
            breakdown: false,
        });
    }

    let m = cfg.restart;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut breakdown = false;
    let mut r = true_residual(op, b, &x);
    let mut rel = norm2(&r) / bnorm;
    if !rel.is_finite() {
        return Err(Error::NonFinite("gmres residual"));
    }

    while rel > cfg.rel_tol && iterations < cfg.max_iters {
        let beta = norm2(&r);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        v.push(r.iter().map(|ri| ri / beta).collect());
        // Hessenberg columns after Givens rotations
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut cycle_breakdown = false;

        while k < m && iterations < cfg.max_iters {
            let mut zk = vec![0.0; n];
            precond.apply(&v[k], &mut zk)?;
            let mut w = op.apply_vec(&zk);
            iterations += 1;
            if !super::all_finite(&w) {
                return Err(Error::NonFinite("gmres Arnoldi vector"));
            }
            let mut col = vec![0.0; k + 2];
            // modified Gram-Schmidt with one reorthogonalization pass
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(&w, vi);
                    col[i] += hij;
                    axpy(-hij, vi, &mut w);
                }
            }
            let hnext = norm2(&w);
            col[k + 1] = hnext;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push((c, s));
            h.push(col);
            z.push(zk);
            k += 1;

            let est = g[k].abs() / bnorm;
            if !est.is_finite() {
                return Err(Error::NonFinite("gmres residual estimate"));
            }
            history.push(est);
            if hnext <= HAPPY_BREAKDOWN * beta {
                cycle_breakdown = true;
                break;
            }
            if est <= cfg.rel_tol {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }

        let y = back_solve(&h, &g, k);
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        if !super::all_finite(&x) {
            return Err(Error::NonFinite("gmres iterate"));
        }
        r = true_residual(op, b, &x);
        rel = norm2(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("gmres residual"));
        }
        if cycle_breakdown && rel > cfg.rel_tol {
            breakdown = true;
            break;
        }
    }

    Ok(GmresOutcome {
        x,
        iterations,
        converged: rel <= cfg.rel_tol,
        rel_residual: rel,
        history,
        breakdown,
    })
}

fn true_residual<A: LinearOperator + ?Sized>(op: &A, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = op.apply_vec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves the leading `k x k` upper-triangular system stored by columns.
fn back_solve(h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        for j in i + 1..k {
            y[i] -= h[j][i] * y[j];
        }
        y[i] = if h[i][i] != 0.0 { y[i] / h[i][i] } else { 0.0 };
    }
    y
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients for SPD `A` with SPD `P`.
pub fn cg<A, P>(
    op: &A,
    precond: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<KrylovOutcome>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = op.dim();
    check_len("cg rhs", n, b.len())?;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            converged: true,
            rel_residual: 0.0,
        });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut r = true_residual(op, b, &x);
    let mut rel = norm2(&r) / bnorm;
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let mut q = vec![0.0; n];
    while rel > rel_tol && it < max_iters {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() {
            return Err(Error::NonFinite("cg curvature"));
        }
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        it += 1;
        rel = norm2(&r) / bnorm;
        if rel <= rel_tol {
            break;
        }
        precond.apply(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    if !super::all_finite(&x) {
        return Err(Error::NonFinite("cg iterate"));
    }
    Ok(KrylovOutcome {
        x,
        iterations: it,
        converged: rel <= rel_tol,
        rel_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseMatrix, FnOperator, Identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Dense(DenseMatrix);
    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.0.n_rows()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            y.copy_from_slice(&self.0.matvec(x));
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = [1.0, 2.0, 3.0];
        let out = gmres(&Identity(3), &Identity(3), &b, None, &GmresConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b.to_vec());
    }

    #[test]
    fn spd_system_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = DenseMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let a = g.matmul(&g.transpose()).unwrap().add_scaled(1.0, &DenseMatrix::identity(5), 1.0).unwrap();
        let b: Vec<f64> = (0..5).map(|i| i as f64 + 1.0).collect();
        let exact = a.lu_solve(&b).unwrap();
        let cfg = GmresConfig { rel_tol: 1e-10, ..Default::default() };
        let out = gmres(&Dense(a.clone()), &Identity(5), &b, None, &cfg).unwrap();
        assert!(out.converged);
        let err: f64 = exact.iter().zip(&out.x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm2(&exact) < 1e-8);
        let cgo = cg(&Dense(a), &Identity(5), &b, None, 1e-12, 100).unwrap();
        assert!(cgo.converged);
    }

    #[test]
    fn restarted_history_is_monotone_within_cycles() {
        let n = 40;
        let op = FnOperator {
            n,
            f: |x: &[f64], y: &mut [f64]| {
                for i in 0..x.len() {
                    y[i] = (i as f64 + 1.0) * x[i] + if i > 0 { 0.3 * x[i - 1] } else { 0.0 };
                }
            },
        };
        let b = vec![1.0; n];
        let cfg = GmresConfig { restart: 7, max_iters: 500, rel_tol: 1e-9 };
        let out = gmres(&op, &Identity(n), &b, None, &cfg).unwrap();
        assert!(out.converged);
        for cyc in out.history.chunks(7) {
            for w in cyc.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
        let r = true_residual(&op, &b, &out.x);
        assert!(norm2(&r) / norm2(&b) <= 1e-9);
    }

    #[test]
    fn nan_is_hard_error() {
        let op = FnOperator { n: 2, f: |_: &[f64], y: &mut [f64]| y.fill(f64::NAN) };
        assert!(matches!(
            gmres(&op, &Identity(2), &[1.0, 0.0], None, &GmresConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn max_iters_reports_unconverged() {
        let n = 50;
        let op = FnOperator {
            n,
            f: |x: &[f64], y: &mut [f64]| {
                for i in 0..x.len() {
                    y[i] = (1.0 + i as f64 * i as f64) * x[i];
                }
            },
        };
        let cfg = GmresConfig { restart: 3, max_iters: 6, rel_tol: 1e-12 };
        let out = gmres(&op, &Identity(n), &vec![1.0; n], None, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 6);
    }
}
