//! The rescaled truncated saddle-point system
//!
//! ```text
//! [ A^   T M  ] [x ]   [0]
//! [ M T  -eta Kbar ] [y'] + mbar mbar^T = [b],   y = eps y'
//! ```
//!
//! with `A^ = T Kbar T + T^`, `mbar = [0; sqrt(eta) m]`, and the three block
//! preconditioners BD, BDSC and BTDSC.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{check_len, Error, Result};
use crate::fem::FemOperators;
use crate::linalg::{
    axpy, gmres, sherman_woodbury_solve, CsrMatrix, DenseMatrix, GmresConfig, LinearOperator,
    Preconditioner, RankOneUpdated,
};
use crate::multilevel::{amg_solve, build_aggregation_hierarchy, AggregationParams, Hierarchy};
use crate::truncation::{compress_symmetric, truncate_rows, truncate_spd, TruncationMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecondKind {
    Bd,
    Bdsc,
    Btdsc,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 3] = [PrecondKind::Bd, PrecondKind::Bdsc, PrecondKind::Btdsc];

    pub fn as_str(&self) -> &'static str {
        match self {
            PrecondKind::Bd => "bd",
            PrecondKind::Bdsc => "bdsc",
            PrecondKind::Btdsc => "btdsc",
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bd" => Ok(PrecondKind::Bd),
            "bdsc" => Ok(PrecondKind::Bdsc),
            "btdsc" => Ok(PrecondKind::Btdsc),
            other => Err(Error::InvalidArgument(format!(
                "unknown preconditioner '{other}' (expected bd, bdsc or btdsc)"
            ))),
        }
    }
}

/// How the diagonal blocks of a preconditioner are inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolve {
    /// AMG-preconditioned conjugate gradients to a relative tolerance.
    Amg { rel_tol: f64, max_cycles: usize },
    /// Dense Cholesky factorisation (small problems only).
    Exact,
}

impl Default for InnerSolve {
    fn default() -> Self {
        InnerSolve::Amg {
            rel_tol: 1e-7,
            max_cycles: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleConfig {
    pub gmres: GmresConfig,
    pub inner: InnerSolve,
    pub amg: AggregationParams,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            gmres: GmresConfig::default(),
            inner: InnerSolve::default(),
            amg: AggregationParams::default(),
        }
    }
}

/// Blocks of the truncated system. All blocks are stored explicitly.
#[derive(Debug, Clone)]
pub struct TruncatedSaddleSystem {
    pub n: usize,
    pub eps: f64,
    pub eta: f64,
    pub mask: TruncationMask,
    pub kbar: RankOneUpdated,
    /// `A^ = T Kbar T + T^`
    pub a_hat: RankOneUpdated,
    /// `B^ = T M`
    pub b_hat: CsrMatrix,
    /// `B^^T = M T`
    pub b_hat_t: CsrMatrix,
    /// `T M T`
    pub mass_s: CsrMatrix,
    pub mass: CsrMatrix,
    /// `[0; sqrt(eta) m]`
    pub mbar: Vec<f64>,
}

/// Builds the system and the right-hand side `[0; b]`.
pub fn build_system(
    ops: &FemOperators,
    mask: &TruncationMask,
    rhs_g: &[f64],
) -> Result<(TruncatedSaddleSystem, Vec<f64>)> {
    let n = ops.n();
    check_len("saddle mask", n, mask.n())?;
    check_len("saddle rhs", n, rhs_g.len())?;
    let kbar = ops.kbar();
    let a_hat = truncate_spd(&kbar, mask)?;
    let b_hat = truncate_rows(&ops.mass, mask)?;
    let b_hat_t = b_hat.transpose();
    let mass_s = compress_symmetric(&ops.mass, mask)?;
    let mut mbar = vec![0.0; 2 * n];
    let s = ops.eta.sqrt();
    for (dst, mi) in mbar[n..].iter_mut().zip(&ops.m) {
        *dst = s * mi;
    }
    let mut rhs = vec![0.0; 2 * n];
    rhs[n..].copy_from_slice(rhs_g);
    Ok((
        TruncatedSaddleSystem {
            n,
            eps: ops.eps,
            eta: ops.eta,
            mask: mask.clone(),
            kbar,
            a_hat,
            b_hat,
            b_hat_t,
            mass_s,
            mass: ops.mass.clone(),
            mbar,
        },
        rhs,
    ))
}

impl TruncatedSaddleSystem {
    /// `A^ x` without the rank-one term `mbar mbar^T`.
    pub fn apply_base(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (x, y) = v.split_at(n);
        let (o1, o2) = out.split_at_mut(n);
        self.a_hat.apply_into(x, o1);
        let by = self.b_hat.spmv(y).expect("dimensions checked at build");
        axpy(1.0, &by, o1);
        self.kbar.apply_into(y, o2);
        for v in o2.iter_mut() {
            *v *= -self.eta;
        }
        let btx = self.b_hat_t.spmv(x).expect("dimensions checked at build");
        axpy(1.0, &btx, o2);
    }

    /// `(A^ + mbar mbar^T) v`
    pub fn apply_full(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n];
        self.apply_base(v, &mut out);
        let c = crate::linalg::dot(&self.mbar, v);
        axpy(c, &self.mbar, &mut out);
        out
    }

    /// Dense `A^` (2n x 2n), without the rank-one term.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let a = self.a_hat.to_dense()?;
        let b = self.b_hat.to_dense()?;
        let bt = self.b_hat_t.to_dense()?;
        let c = self.kbar.to_dense()?.scaled(-self.eta);
        DenseMatrix::block2x2(&a, &b, &bt, &c)
    }

    /// Dense `A^ + mbar mbar^T`.
    pub fn to_dense_full(&self) -> Result<DenseMatrix> {
        let mut d = self.to_dense()?;
        d.add_outer(1.0, &self.mbar, &self.mbar);
        Ok(d)
    }

    /// BD (1,1) block `A^ + eta^{-1/2} T M T`.
    pub fn bd_block1(&self) -> Result<RankOneUpdated> {
        let base = self
            .a_hat
            .base
            .linear_combination(1.0, &self.mass_s, 1.0 / self.eta.sqrt())?;
        RankOneUpdated::new(base, self.a_hat.u.clone(), self.a_hat.v.clone())
    }

    /// BD (2,2) block `eta Kbar + eta^{1/2} T M T`.
    pub fn bd_block2(&self) -> Result<RankOneUpdated> {
        let base = self
            .kbar
            .base
            .linear_combination(self.eta, &self.mass_s, self.eta.sqrt())?;
        let s = self.eta.sqrt();
        RankOneUpdated::symmetric(base, self.kbar.u.iter().map(|v| v * s).collect())
    }

    /// Left factor of the Schur approximation, `T M T + sqrt(eta) Kbar`.
    pub fn schur_left(&self) -> Result<RankOneUpdated> {
        let s = self.eta.sqrt();
        let base = self.mass_s.linear_combination(1.0, &self.kbar.base, s)?;
        RankOneUpdated::symmetric(base, self.kbar.u.iter().map(|v| v * s.sqrt()).collect())
    }

    /// Right factor of the Schur approximation, `T M T + sqrt(eta) A^`.
    pub fn schur_right(&self) -> Result<RankOneUpdated> {
        let s = self.eta.sqrt();
        let base = self.mass_s.linear_combination(1.0, &self.a_hat.base, s)?;
        RankOneUpdated::symmetric(base, self.a_hat.u.iter().map(|v| v * s.sqrt()).collect())
    }

    /// Maps the rescaled `y'` back to `y = eps y'`.
    pub fn unscale(&self, y_prime: &[f64]) -> Vec<f64> {
        y_prime.iter().map(|v| v * self.eps).collect()
    }
}

impl LinearOperator for TruncatedSaddleSystem {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_base(x, y);
    }
}

/// A solver for one SPD block.
#[derive(Debug, Clone)]
pub enum BlockSolver {
    Amg {
        hierarchy: Hierarchy,
        rel_tol: f64,
        max_cycles: usize,
    },
    Dense {
        factor: DenseMatrix,
    },
}

impl BlockSolver {
    pub fn new(op: &RankOneUpdated, inner: InnerSolve, params: &AggregationParams) -> Result<Self> {
        match inner {
            InnerSolve::Amg {
                rel_tol,
                max_cycles,
            } => Ok(BlockSolver::Amg {
                hierarchy: build_aggregation_hierarchy(op, params)?,
                rel_tol,
                max_cycles,
            }),
            InnerSolve::Exact => Ok(BlockSolver::Dense {
                factor: op.to_dense()?.cholesky()?,
            }),
        }
    }

    pub fn operator(&self) -> Option<&RankOneUpdated> {
        match self {
            BlockSolver::Amg { hierarchy, .. } => Some(hierarchy.finest()),
            BlockSolver::Dense { .. } => None,
        }
    }

    /// Returns the approximate solution and the number of inner iterations.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        match self {
            BlockSolver::Amg {
                hierarchy,
                rel_tol,
                max_cycles,
            } => {
                let s = amg_solve(hierarchy, b, None, *rel_tol, *max_cycles)?;
                Ok((s.x, s.cycles))
            }
            BlockSolver::Dense { factor } => Ok((DenseMatrix::cholesky_solve(factor, b), 0)),
        }
    }
}

#[derive(Debug, Clone)]
enum Blocks {
    Diagonal {
        first: BlockSolver,
        second: BlockSolver,
    },
    Schur {
        a_hat: BlockSolver,
        left: BlockSolver,
        right: BlockSolver,
    },
}

/// One of the three block preconditioners, set up for a fixed system.
#[derive(Debug, Clone)]
pub struct SaddlePreconditioner<'a> {
    pub kind: PrecondKind,
    sys: &'a TruncatedSaddleSystem,
    blocks: Blocks,
}

impl<'a> SaddlePreconditioner<'a> {
    pub fn new(sys: &'a TruncatedSaddleSystem, kind: PrecondKind, cfg: &SaddleConfig) -> Result<Self> {
        let mk = |op: &RankOneUpdated| BlockSolver::new(op, cfg.inner, &cfg.amg);
        let blocks = match kind {
            PrecondKind::Bd => Blocks::Diagonal {
                first: mk(&sys.bd_block1()?)?,
                second: mk(&sys.bd_block2()?)?,
            },
            PrecondKind::Bdsc | PrecondKind::Btdsc => Blocks::Schur {
                a_hat: mk(&sys.a_hat)?,
                left: mk(&sys.schur_left()?)?,
                right: mk(&sys.schur_right()?)?,
            },
        };
        Ok(Self { kind, sys, blocks })
    }

    /// `S^_pre^{-1} r = (M_s + sqrt(eta) A^)^{-1} A^ (M_s + sqrt(eta) Kbar)^{-1} r`
    fn schur_solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let Blocks::Schur { left, right, .. } = &self.blocks else {
            unreachable!("schur_solve on a block-diagonal preconditioner")
        };
        let (t, _) = left.solve(r)?;
        let at = self.sys.a_hat.apply_vec(&t);
        Ok(right.solve(&at)?.0)
    }

    pub fn apply_bd(&self, r: &[f64]) -> Result<Vec<f64>> {
        let Blocks::Diagonal { first, second } = &self.blocks else {
            return Err(Error::InvalidArgument("preconditioner was not set up as bd".into()));
        };
        let n = self.sys.n;
        check_len("bd residual", 2 * n, r.len())?;
        let mut z = first.solve(&r[..n])?.0;
        z.extend(second.solve(&r[n..])?.0);
        Ok(z)
    }

    pub fn apply_bdsc(&self, r: &[f64]) -> Result<Vec<f64>> {
        let Blocks::Schur { a_hat, .. } = &self.blocks else {
            return Err(Error::InvalidArgument("preconditioner was not set up as bdsc".into()));
        };
        let n = self.sys.n;
        check_len("bdsc residual", 2 * n, r.len())?;
        let mut z = a_hat.solve(&r[..n])?.0;
        z.extend(self.schur_solve(&r[n..])?);
        Ok(z)
    }

    pub fn apply_btdsc(&self, r: &[f64]) -> Result<Vec<f64>> {
        let Blocks::Schur { a_hat, .. } = &self.blocks else {
            return Err(Error::InvalidArgument("preconditioner was not set up as btdsc".into()));
        };
        let n = self.sys.n;
        check_len("btdsc residual", 2 * n, r.len())?;
        let x1 = a_hat.solve(&r[..n])?.0;
        let mut rhs = self.sys.b_hat_t.spmv(&x1)?;
        axpy(-1.0, &r[n..], &mut rhs);
        let x2 = self.schur_solve(&rhs)?;
        let mut z = x1;
        z.extend(x2);
        Ok(z)
    }

    pub fn apply_kind(&self, r: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            PrecondKind::Bd => self.apply_bd(r),
            PrecondKind::Bdsc => self.apply_bdsc(r),
            PrecondKind::Btdsc => self.apply_btdsc(r),
        }
    }
}

impl Preconditioner for SaddlePreconditioner<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.n
    }
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(&self.apply_kind(r)?);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    /// `x`, the order-parameter part.
    pub u_part: Vec<f64>,
    /// `y = eps y'`, the chemical-potential part.
    pub w_part: Vec<f64>,
    /// The unscaled solution `[x; y']`.
    pub raw: Vec<f64>,
    pub it1: usize,
    pub it2: usize,
    pub converged: bool,
    /// Final relative residuals of the two GMRES solves.
    pub residuals: Vec<f64>,
    pub wall_time: f64,
}

/// Solves `(A^ + mbar mbar^T) v = rhs` with two preconditioned GMRES solves
/// combined by the Sherman-Woodbury formula. Non-convergence of GMRES is
/// reported through `converged`.
pub fn solve_saddle(
    sys: &TruncatedSaddleSystem,
    precond: &SaddlePreconditioner<'_>,
    rhs: &[f64],
    cfg: &GmresConfig,
) -> Result<SaddleSolution> {
    check_len("saddle rhs", 2 * sys.n, rhs.len())?;
    let start = Instant::now();
    let mut converged = true;
    let mut residuals = Vec::with_capacity(2);
    let ws = sherman_woodbury_solve(
        |b| {
            let out = gmres(sys, precond, b, None, cfg)?;
            converged &= out.converged;
            residuals.push(out.rel_residual);
            Ok((out.x, out.iterations))
        },
        &sys.mbar,
        &sys.mbar,
        rhs,
    )?;
    let wall_time = start.elapsed().as_secs_f64();
    let n = sys.n;
    Ok(SaddleSolution {
        u_part: ws.x[..n].to_vec(),
        w_part: sys.unscale(&ws.x[n..]),
        raw: ws.x,
        it1: ws.it1,
        it2: ws.it2,
        converged,
        residuals,
        wall_time,
    })
}
