//! Dense spectral checks of the preconditioned saddle operators.
//!
//! Every check assembles the operators densely, solves the relevant
//! symmetric-definite pencil with [`dense_generalized_eig`], and compares
//! the spectrum against the theoretical interval. Reports carry margins so
//! the tightness of each bound can be read off directly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::linalg::{dense_generalized_eig, DenseMatrix, GeneralizedEigen};
use crate::truncation::TruncationMask;

/// Largest node count accepted by the dense harness.
pub const MAX_NODES: usize = 400;

/// Slack used for every interval check.
pub const BOUND_SLACK: f64 = 1e-8;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;
pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// Condition number threshold quoted for BDSC.
pub const BDSC_KAPPA_QUOTED: f64 = 3.90;

/// Exact condition number implied by the BDSC intervals.
pub fn bdsc_kappa_bound() -> f64 {
    GOLDEN / (SQRT2 - 1.0)
}

/// Which preconditioned operator a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectrumKind {
    Bd,
    Schur,
    Bdsc,
    Btdsc,
}

impl SpectrumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrumKind::Bd => "bd",
            SpectrumKind::Schur => "schur",
            SpectrumKind::Bdsc => "bdsc",
            SpectrumKind::Btdsc => "btdsc",
        }
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One named pass/fail check. `margin` is positive when the check passes
/// and measures the distance to the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
}

impl Verdict {
    fn new(name: impl Into<String>, margin: f64) -> Self {
        Self {
            name: name.into(),
            pass: margin >= 0.0,
            margin,
        }
    }
}

/// Truncation pattern applied before compression.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskInfo {
    pub seed: Option<u64>,
    pub fraction: f64,
    pub truncated: usize,
}

impl MaskInfo {
    pub fn describe(mask: &TruncationMask, seed: Option<u64>) -> Self {
        Self {
            seed,
            fraction: mask.active_count() as f64 / mask.n().max(1) as f64,
            truncated: mask.active_count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub kind: SpectrumKind,
    pub n_nodes: usize,
    pub eta: f64,
    pub mask: Option<MaskInfo>,
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
    pub min_abs: f64,
    pub max_abs: f64,
    pub kappa: f64,
    /// Theoretical intervals, as `(lo, hi)` pairs.
    pub intervals: Vec<(f64, f64)>,
    pub verdicts: Vec<Verdict>,
    /// Largest scaled residual of the computed eigenpairs.
    pub max_residual: f64,
    /// Set when the pencil is structurally degenerate (no untruncated node).
    pub degenerate: bool,
}

impl SpectralReport {
    fn new(
        kind: SpectrumKind,
        n_nodes: usize,
        eta: f64,
        eig: &GeneralizedEigen,
        max_residual: f64,
    ) -> Self {
        let (min_abs, max_abs) = abs_range(&eig.values);
        Self {
            kind,
            n_nodes,
            eta,
            mask: None,
            eigenvalues: eig.values.clone(),
            min_abs,
            max_abs,
            kappa: max_abs / min_abs,
            intervals: Vec::new(),
            verdicts: Vec::new(),
            max_residual,
            degenerate: false,
        }
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn passed(&self) -> bool {
        !self.degenerate && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Outer envelope of the theoretical intervals.
    pub fn bound_range(&self) -> (f64, f64) {
        let lo = self.intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
        let hi = self.intervals.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn push(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    fn push_residual(&mut self) {
        self.push(Verdict::new("eigen_residual", RESIDUAL_TOL - self.max_residual));
    }
}

const RESIDUAL_TOL: f64 = 1e-9;

fn abs_range(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    })
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_NODES {
        return Err(Error::SizeGuard {
            entries: n,
            limit: MAX_NODES,
        });
    }
    Ok(())
}

fn solve_pencil(a: &DenseMatrix, b: &DenseMatrix) -> Result<(GeneralizedEigen, f64)> {
    let eig = dense_generalized_eig(a, b, true)?;
    let res = eig.max_residual(a, b).unwrap_or(f64::NAN);
    Ok((eig, res))
}

/// Dense untruncated blocks shared by the checks.
#[derive(Debug, Clone)]
pub struct DenseBlocks {
    pub n: usize,
    pub eta: f64,
    pub kbar: DenseMatrix,
    pub mass: DenseMatrix,
}

impl DenseBlocks {
    pub fn new(ops: &FemOperators) -> Result<Self> {
        guard(ops.n())?;
        Ok(Self {
            n: ops.n(),
            eta: ops.eta,
            kbar: ops.kbar().to_dense()?,
            mass: ops.mass.to_dense()?,
        })
    }

    /// `[[Kbar, M], [M, -eta Kbar]]`
    pub fn saddle(&self) -> Result<DenseMatrix> {
        DenseMatrix::block2x2(&self.kbar, &self.mass, &self.mass, &self.kbar.scaled(-self.eta))
    }

    /// `diag(Kbar + eta^{-1/2} M, eta Kbar + eta^{1/2} M)`
    pub fn bd(&self) -> Result<DenseMatrix> {
        let s = self.eta.sqrt();
        let b1 = self.kbar.add_scaled(1.0, &self.mass, 1.0 / s)?;
        let b2 = self.kbar.add_scaled(self.eta, &self.mass, s)?;
        let z = DenseMatrix::zeros(self.n, self.n);
        DenseMatrix::block2x2(&b1, &z, &z, &b2)
    }

    /// Negative Schur complement `eta Kbar + M Kbar^{-1} M`.
    pub fn schur(&self) -> Result<DenseMatrix> {
        let kinv_m = self.kbar.spd_solve_many(&self.mass)?;
        let mkm = self.mass.matmul(&kinv_m)?;
        Ok(self.kbar.add_scaled(self.eta, &mkm, 1.0)?.symmetrized())
    }

    /// `S + 2 eta^{1/2} M`
    pub fn schur_pre(&self, schur: &DenseMatrix) -> Result<DenseMatrix> {
        schur.add_scaled(1.0, &self.mass, 2.0 * self.eta.sqrt())
    }

    /// `diag(Kbar, S_pre)`
    pub fn bdsc(&self, s_pre: &DenseMatrix) -> Result<DenseMatrix> {
        let z = DenseMatrix::zeros(self.n, self.n);
        DenseMatrix::block2x2(&self.kbar, &z, &z, s_pre)
    }

    /// `[[Kbar, 0], [M, -S_pre]]`
    pub fn btdsc(&self, s_pre: &DenseMatrix) -> Result<DenseMatrix> {
        let z = DenseMatrix::zeros(self.n, self.n);
        DenseMatrix::block2x2(&self.kbar, &z, &self.mass, &s_pre.scaled(-1.0))
    }

    /// Indices of the 2n system kept after truncation: untruncated
    /// primal nodes and every dual node.
    pub fn kept_indices(&self, mask: &TruncationMask) -> Vec<usize> {
        let mut idx = mask.inactive_indices();
        idx.extend(self.n..2 * self.n);
        idx
    }
}

/// Untruncated BD check, plus the truncated-containment check when a mask
/// is given.
pub fn check_bd_bounds(ops: &FemOperators, mask: Option<(&TruncationMask, Option<u64>)>) -> Result<SpectralReport> {
    let blocks = DenseBlocks::new(ops)?;
    let a = blocks.saddle()?;
    let b = blocks.bd()?;
    let (eig, res) = solve_pencil(&a, &b)?;
    let mut rep = SpectralReport::new(SpectrumKind::Bd, blocks.n, blocks.eta, &eig, res);
    let lo = 1.0 / SQRT2;
    rep.intervals = vec![(-1.0, -lo), (lo, 1.0)];
    rep.push(Verdict::new("abs_lower", rep.min_abs - (lo - BOUND_SLACK)));
    rep.push(Verdict::new("abs_upper", 1.0 - rep.max_abs));
    rep.push(Verdict::new("kappa", SQRT2 + BOUND_SLACK - rep.kappa));
    rep.push_residual();
    match mask {
        None => Ok(rep),
        Some((mask, seed)) => compressed(rep, &blocks, &a, &b, mask, seed),
    }
}

/// Replaces an untruncated report by the spectrum of the pencil compressed
/// to untruncated nodes, checking that its extremes stay inside the
/// untruncated ones.
fn compressed(
    full: SpectralReport,
    blocks: &DenseBlocks,
    a: &DenseMatrix,
    b: &DenseMatrix,
    mask: &TruncationMask,
    seed: Option<u64>,
) -> Result<SpectralReport> {
    crate::error::check_len("spectra mask", blocks.n, mask.n())?;
    let info = MaskInfo::describe(mask, seed);
    let idx = blocks.kept_indices(mask);
    let ac = a.principal_submatrix(&idx);
    let bc = b.principal_submatrix(&idx);
    let (eig, res) = solve_pencil(&ac, &bc)?;
    let mut rep = SpectralReport::new(full.kind, blocks.n, blocks.eta, &eig, res);
    rep.mask = Some(info);
    rep.intervals = vec![(full.lambda_min(), full.lambda_max())];
    if mask.active_count() == mask.n() {
        rep.degenerate = true;
    }
    rep.push(Verdict::new(
        "contained_lower",
        rep.lambda_min() - (full.lambda_min() - BOUND_SLACK),
    ));
    rep.push(Verdict::new(
        "contained_upper",
        full.lambda_max() + BOUND_SLACK - rep.lambda_max(),
    ));
    rep.push_residual();
    Ok(rep)
}

/// Spectrum of `S_pre^{-1} S` for the untruncated Schur complement.
pub fn check_schur_bounds(ops: &FemOperators) -> Result<SpectralReport> {
    let blocks = DenseBlocks::new(ops)?;
    schur_report(&blocks)
}

fn schur_report(blocks: &DenseBlocks) -> Result<SpectralReport> {
    let s = blocks.schur()?;
    s.cholesky().map_err(|_| {
        Error::InvalidArgument("negative Schur complement is not SPD".into())
    })?;
    let s_pre = blocks.schur_pre(&s)?;
    let (eig, res) = solve_pencil(&s, &s_pre)?;
    let mut rep = SpectralReport::new(SpectrumKind::Schur, blocks.n, blocks.eta, &eig, res);
    rep.intervals = vec![(0.5, 1.0)];
    rep.push(Verdict::new("lower", rep.lambda_min() - (0.5 - BOUND_SLACK)));
    rep.push(Verdict::new("upper", 1.0 - rep.lambda_max()));
    rep.push(Verdict::new("kappa", 2.0 - rep.kappa));
    rep.push_residual();
    Ok(rep)
}

/// Extremes of `x^T S x / x^T S_pre x` over seeded random probes.
pub fn rayleigh_probe_range(ops: &FemOperators, probes: usize, seed: u64) -> Result<(f64, f64)> {
    let blocks = DenseBlocks::new(ops)?;
    let s = blocks.schur()?;
    let s_pre = blocks.schur_pre(&s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..probes {
        let x: Vec<f64> = (0..blocks.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let num = crate::linalg::dot(&x, &s.matvec(&x));
        let den = crate::linalg::dot(&x, &s_pre.matvec(&x));
        let q = num / den;
        range = (range.0.min(q), range.1.max(q));
    }
    Ok(range)
}

/// Eigenvalue pair predicted for one `mu` of `Kbar z = mu (Kbar + eta^{-1/2} M) z`.
pub fn bdsc_roots(mu: f64) -> (f64, f64) {
    let disc = (mu.powi(4) + 6.0 * mu * mu - 8.0 * mu + 5.0).sqrt();
    let c = 0.5 * (1.0 - mu * mu);
    (c - 0.5 * disc, c + 0.5 * disc)
}

/// BDSC spectrum against the two-interval bound and the per-`mu` roots.
pub fn check_bdsc_bounds(ops: &FemOperators, mask: Option<(&TruncationMask, Option<u64>)>) -> Result<SpectralReport> {
    let blocks = DenseBlocks::new(ops)?;
    let a = blocks.saddle()?;
    let s = blocks.schur()?;
    let s_pre = blocks.schur_pre(&s)?;
    let b = blocks.bdsc(&s_pre)?;
    let (eig, res) = solve_pencil(&a, &b)?;
    let mut rep = SpectralReport::new(SpectrumKind::Bdsc, blocks.n, blocks.eta, &eig, res);
    let neg_hi = 1.0 - SQRT2;
    rep.intervals = vec![(-1.0, neg_hi), (1.0, GOLDEN)];
    let neg_margin = rep
        .eigenvalues
        .iter()
        .filter(|&&v| v < 0.0)
        .map(|&v| (v + 1.0 + BOUND_SLACK).min(neg_hi + BOUND_SLACK - v))
        .fold(f64::INFINITY, f64::min);
    let pos_margin = rep
        .eigenvalues
        .iter()
        .filter(|&&v| v >= 0.0)
        .map(|&v| (v - 1.0 + BOUND_SLACK).min(GOLDEN + BOUND_SLACK - v))
        .fold(f64::INFINITY, f64::min);
    rep.push(Verdict::new("negative_interval", neg_margin));
    rep.push(Verdict::new("positive_interval", pos_margin));
    rep.push(Verdict::new("kappa", BDSC_KAPPA_QUOTED - rep.kappa));

    let b1 = blocks.kbar.add_scaled(1.0, &blocks.mass, 1.0 / blocks.eta.sqrt())?;
    let mu = dense_generalized_eig(&blocks.kbar, &b1, false)?.values;
    let mut predicted: Vec<f64> = mu
        .iter()
        .flat_map(|&m| {
            let (l, h) = bdsc_roots(m);
            [l, h]
        })
        .collect();
    predicted.sort_by(f64::total_cmp);
    let mismatch = predicted
        .iter()
        .zip(&rep.eigenvalues)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    rep.push(Verdict::new("root_prediction", 1e-7 - mismatch));
    rep.push_residual();
    match mask {
        None => Ok(rep),
        Some((mask, seed)) => compressed(rep, &blocks, &a, &b, mask, seed),
    }
}

/// Result of the block-triangular structure check.
#[derive(Debug, Clone)]
pub struct BtdscReport {
    pub report: SpectralReport,
    /// Number of eigenvalues equal to one (within `1e-8`).
    pub unit_multiplicity: usize,
    /// `max |P^{-1} A - [[I, *], [0, *]]|` over the structurally fixed blocks.
    pub structure_defect: f64,
    /// Spectrum of `S_pre^{-1} S` as computed by [`check_schur_bounds`].
    pub schur: SpectralReport,
}

/// BTDSC: `P^{-1} A = [[I, Kbar^{-1} M], [0, S_pre^{-1} S]]`, so the spectrum
/// is one with multiplicity n together with `spec(S_pre^{-1} S)`.
pub fn check_btdsc_bounds(ops: &FemOperators) -> Result<BtdscReport> {
    let blocks = DenseBlocks::new(ops)?;
    let n = blocks.n;
    let a = blocks.saddle()?;
    let s = blocks.schur()?;
    let s_pre = blocks.schur_pre(&s)?;
    let p = blocks.btdsc(&s_pre)?;
    let pa = p.lu_solve_many(&a)?;
    let mut defect: f64 = 0.0;
    for i in 0..2 * n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((pa[(i, j)] - target).abs());
        }
    }
    let lower_right = DenseMatrix::from_fn(n, n, |i, j| pa[(n + i, n + j)]);
    let direct = s_pre.lu_solve_many(&s)?;
    let block_err = lower_right.add_scaled(1.0, &direct, -1.0)?.max_abs() / direct.max_abs();
    defect = defect.max(block_err);

    let schur = schur_report(&blocks)?;
    let mut values: Vec<f64> = vec![1.0; n];
    values.extend(&schur.eigenvalues);
    values.sort_by(f64::total_cmp);
    let unit_multiplicity = values.iter().filter(|v| (*v - 1.0).abs() <= 1e-8).count();
    let eig = GeneralizedEigen {
        values,
        vectors: None,
        off_norms: Vec::new(),
        reduced_trace: f64::NAN,
    };
    let mut rep = SpectralReport::new(SpectrumKind::Btdsc, n, blocks.eta, &eig, schur.max_residual);
    rep.intervals = vec![(0.5, 1.0)];
    rep.push(Verdict::new("lower", rep.lambda_min() - (0.5 - BOUND_SLACK)));
    rep.push(Verdict::new("upper", 1.0 + BOUND_SLACK - rep.lambda_max()));
    rep.push(Verdict::new("unit_multiplicity", if unit_multiplicity == n { 0.0 } else { -1.0 }));
    rep.push(Verdict::new("block_structure", 1e-8 - defect));
    rep.push_residual();
    Ok(BtdscReport {
        report: rep,
        unit_multiplicity,
        structure_defect: defect,
        schur,
    })
}

/// Outcome of [`check_poincare`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareVerdict {
    pub pass: bool,
    /// Smallest slack over both interlacing inequalities.
    pub margin: f64,
    pub full: Vec<f64>,
    pub compressed: Vec<f64>,
}

/// Interlacing `lambda_i(A) <= mu_i <= lambda_{i+k}(A)` where `mu` is the
/// spectrum of `A` restricted to the untruncated indices and `k` is the
/// number of truncated ones.
pub fn check_poincare(a: &DenseMatrix, mask: &TruncationMask) -> Result<PoincareVerdict> {
    guard(a.n_rows())?;
    crate::error::check_len("poincare mask", a.n_rows(), mask.n())?;
    let full = crate::linalg::jacobi_eigen(a, false)?.values;
    let idx = mask.inactive_indices();
    let compressed = if idx.is_empty() {
        Vec::new()
    } else {
        crate::linalg::jacobi_eigen(&a.principal_submatrix(&idx), false)?.values
    };
    let k = mask.active_count();
    let scale = full.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut margin = f64::INFINITY;
    for (i, &mu) in compressed.iter().enumerate() {
        margin = margin.min(mu - full[i] + tol).min(full[i + k] - mu + tol);
    }
    Ok(PoincareVerdict {
        pass: margin >= 0.0,
        margin,
        full,
        compressed,
    })
}

/// Runs every untruncated check for the given operators.
pub fn untruncated_suite(ops: &FemOperators) -> Result<Vec<SpectralReport>> {
    let btdsc = check_btdsc_bounds(ops)?;
    Ok(vec![
        check_bd_bounds(ops, None)?,
        btdsc.schur.clone(),
        check_bdsc_bounds(ops, None)?,
        btdsc.report,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_uniform_mesh;

    fn ops(n_side: usize) -> FemOperators {
        FemOperators::new(&build_uniform_mesh(n_side).unwrap(), 0.02, 1e-5).unwrap()
    }

    #[test]
    fn roots_at_special_mu() {
        let (l, h) = bdsc_roots(1.0);
        assert!((l + 1.0).abs() < 1e-15 && (h - 1.0).abs() < 1e-15);
        let (l, h) = bdsc_roots(0.0);
        assert!((h - GOLDEN).abs() < 1e-15);
        assert!((l - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn roots_solve_the_quadratic() {
        for mu in [0.05, 0.1, 0.37, 0.8, 1.0] {
            let (l, h) = bdsc_roots(mu);
            for lam in [l, h] {
                let q = (1.0 - lam) * (mu * mu + lam) + (1.0 - mu).powi(2);
                assert!(q.abs() < 1e-13, "mu {mu} lam {lam} q {q}");
            }
        }
    }

    #[test]
    fn bd_passes_at_h8() {
        let rep = check_bd_bounds(&ops(9), None).unwrap();
        assert!(rep.passed(), "{:?}", rep.verdicts);
    }

    #[test]
    fn size_guard() {
        assert!(matches!(DenseBlocks::new(&ops(21)), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn poincare_identity_mask_is_equality() {
        let a = ops(5).kbar().to_dense().unwrap();
        let v = check_poincare(&a, &TruncationMask::empty(25)).unwrap();
        assert!(v.pass);
        for (x, y) in v.full.iter().zip(&v.compressed) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
