//! Sparse and small-dense linear algebra kernels.
//!
//! Everything here works on plain `f64` slices. Row-parallel kernels go
//! through [`par`], which falls back to sequential loops when the
//! `parallel` feature is off. Reductions (dot products, norms) are always
//! sequential so results are bit-reproducible regardless of thread count.

pub mod dense;
pub mod eigen;
pub mod krylov;
pub mod par;
pub mod rank_one;
pub mod sparse;
pub mod woodbury;

pub use dense::DenseMatrix;
pub use eigen::{dense_generalized_eig, jacobi_eigen, GeneralizedEigen, JacobiOutput};
pub use krylov::{cg, gmres, GmresConfig, GmresOutcome, KrylovOutcome};
pub use rank_one::RankOneUpdated;
pub use sparse::CsrMatrix;
pub use woodbury::{sherman_woodbury_solve, WoodburySolution};

use crate::error::Result;

/// A square linear map `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

/// Approximate inverse `z ~ P^{-1} r`. Application may run an inner
/// iterative solve, so it can fail.
pub trait Preconditioner {
    fn dim(&self) -> usize;
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()>;
}

/// Identity map, usable both as operator and preconditioner.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

impl Preconditioner for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F: Fn(&[f64], &mut [f64])> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
