//! Projected Gauss-Seidel and monotone multigrid for
//! `min 1/2 <A v, v> - <b, v>` subject to `lower <= v <= upper`.

use super::aggregation::{build_aggregation_hierarchy, AggregationParams, Hierarchy, UNAGGREGATED};
use super::amg::amg_solve;
use crate::truncation::{truncate_spd, TruncationMask};
use crate::error::{check_len, Error, Result};
use crate::linalg::rank_one::{prolongate_add, restrict};
use crate::linalg::{dot, LinearOperator, RankOneUpdated};

/// Gauss-Seidel sweeps used as the coarsest-level solve.
pub const COARSEST_PGS_SWEEPS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ObstacleBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("obstacle bounds", lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i]) || lower[i].is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "obstacle bounds crossed at {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn constant(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.max(*lo).min(*hi);
        }
    }

    pub fn check_feasible(&self, x: &[f64]) -> Result<()> {
        check_len("obstacle iterate", self.n(), x.len())?;
        for (i, &v) in x.iter().enumerate() {
            if !(v >= self.lower[i] && v <= self.upper[i]) {
                return Err(Error::Infeasible {
                    index: i,
                    value: v,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    /// Defect obstacles `lower - x`, `upper - x`.
    pub fn defect(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.lower.iter().zip(x).map(|(l, v)| l - v).collect(),
            self.upper.iter().zip(x).map(|(u, v)| u - v).collect(),
        )
    }
}

fn residual(a: &RankOneUpdated, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.apply_vec(x);
    b.iter().zip(&ax).map(|(p, q)| p - q).collect()
}

/// `J(x) = 1/2 <A x, x> - <b, x>`
pub fn energy(a: &RankOneUpdated, b: &[f64], x: &[f64]) -> f64 {
    0.5 * dot(&a.apply_vec(x), x) - dot(b, x)
}

/// `|x - P(x - (A x - b))|`, zero exactly at the constrained minimizer.
pub fn projected_residual(a: &RankOneUpdated, b: &[f64], bounds: &ObstacleBounds, x: &[f64]) -> f64 {
    let r = residual(a, b, x);
    let mut s = 0.0;
    for i in 0..x.len() {
        let p = (x[i] + r[i]).max(bounds.lower[i]).min(bounds.upper[i]);
        s += (x[i] - p).powi(2);
    }
    s.sqrt()
}

/// One projected Gauss-Seidel sweep on the defect problem: the correction
/// `y` starts at zero, is built in index order within the defect obstacles,
/// and `x + y` is returned.
pub fn pgs_sweep(
    a: &RankOneUpdated,
    b: &[f64],
    bounds: &ObstacleBounds,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_len("pgs rhs", a.n(), b.len())?;
    check_len("pgs bounds", a.n(), bounds.n())?;
    let r = residual(a, b, x);
    let (dlo, dhi) = bounds.defect(x);
    let mut y = vec![0.0; x.len()];
    a.gauss_seidel(&r, &mut y, false, Some((&dlo, &dhi)));
    let mut out: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
    bounds.project(&mut out);
    Ok(out)
}

/// One monotone multigrid V-cycle.
///
/// Every level performs one projected Gauss-Seidel sweep on its defect
/// problem, then restricts the residual and the defect obstacles. A coarse
/// lower obstacle is the maximum of the fine ones over its aggregate and a
/// coarse upper obstacle the minimum, so any admissible coarse correction
/// prolongates to an admissible fine correction. The coarsest level runs
/// [`COARSEST_PGS_SWEEPS`] sweeps.
pub fn mmg_vcycle(
    h: &Hierarchy,
    b: &[f64],
    bounds: &ObstacleBounds,
    u: &[f64],
) -> Result<Vec<f64>> {
    let a = h.finest();
    check_len("mmg rhs", a.n(), b.len())?;
    bounds.check_feasible(u)?;
    let nl = h.n_levels();

    let mut r = residual(a, b, u);
    let (mut lo, mut hi) = bounds.defect(u);
    let mut corrections: Vec<Vec<f64>> = Vec::with_capacity(nl);
    for l in 0..nl - 1 {
        let level = &h.levels[l];
        let op = &level.op;
        let mut v = vec![0.0; op.n()];
        op.gauss_seidel(&r, &mut v, false, Some((&lo, &hi)));
        let av = op.apply_vec(&v);
        for i in 0..v.len() {
            r[i] -= av[i];
            lo[i] -= v[i];
            hi[i] -= v[i];
        }
        let rc = restrict(&r, &level.aggregate, level.n_coarse);
        let mut clo = vec![f64::NEG_INFINITY; level.n_coarse];
        let mut chi = vec![f64::INFINITY; level.n_coarse];
        for (i, &g) in level.aggregate.iter().enumerate() {
            if g == UNAGGREGATED {
                continue;
            }
            clo[g] = clo[g].max(lo[i]);
            chi[g] = chi[g].min(hi[i]);
        }
        // rounding in lo - v can push a bound a hair past zero
        for g in 0..level.n_coarse {
            clo[g] = clo[g].min(0.0);
            chi[g] = chi[g].max(0.0);
        }
        corrections.push(v);
        r = rc;
        lo = clo;
        hi = chi;
    }
    let coarse = h.coarsest();
    let mut v = vec![0.0; coarse.n()];
    for _ in 0..COARSEST_PGS_SWEEPS {
        coarse.gauss_seidel(&r, &mut v, false, Some((&lo, &hi)));
    }
    for l in (0..nl - 1).rev() {
        let mut fine = corrections.pop().unwrap();
        prolongate_add(&v, &h.levels[l].aggregate, &mut fine);
        v = fine;
    }
    let mut out: Vec<f64> = u.iter().zip(&v).map(|(p, q)| p + q).collect();
    bounds.project(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleConfig {
    pub tol: f64,
    pub max_cycles: usize,
    /// After each cycle, try the linear solve on the current inactive set
    /// and keep it if it lowers the energy.
    pub active_set_polish: bool,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_cycles: 100,
            active_set_polish: false,
        }
    }
}

/// Solves the linear system on the inactive nodes of `x` and projects.
fn polish(a: &RankOneUpdated, b: &[f64], bounds: &ObstacleBounds, x: &[f64]) -> Option<Vec<f64>> {
    let active: Vec<bool> = (0..x.len())
        .map(|i| x[i] == bounds.lower[i] || x[i] == bounds.upper[i])
        .collect();
    let mask = TruncationMask::from_active(&active);
    let at = truncate_spd(a, &mask).ok()?;
    let r = mask.apply_t(&residual(a, b, x));
    let h = build_aggregation_hierarchy(&at, &AggregationParams::default()).ok()?;
    let d = amg_solve(&h, &r, None, 1e-13, 200).ok()?;
    let mut out: Vec<f64> = x.iter().zip(&d.x).map(|(p, q)| p + q).collect();
    bounds.project(&mut out);
    Some(out)
}

#[derive(Debug, Clone)]
pub struct ObstacleSolve {
    pub x: Vec<f64>,
    pub cycles: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Monotone multigrid cycles from `x0` (projected onto the box) until the
/// projected residual drops to `cfg.tol`.
pub fn solve_obstacle(
    h: &Hierarchy,
    b: &[f64],
    bounds: &ObstacleBounds,
    x0: Option<&[f64]>,
    cfg: &ObstacleConfig,
) -> Result<ObstacleSolve> {
    let a = h.finest();
    check_len("obstacle rhs", a.n(), b.len())?;
    check_len("obstacle bounds", a.n(), bounds.n())?;
    if !crate::linalg::all_finite(b) {
        return Err(Error::NonFinite("obstacle rhs"));
    }
    let mut x = x0.map_or_else(|| vec![0.0; a.n()], |x| x.to_vec());
    check_len("obstacle initial guess", a.n(), x.len())?;
    bounds.project(&mut x);
    let mut res = projected_residual(a, b, bounds, &x);
    let mut history = vec![res];
    let mut cycles = 0;
    while res > cfg.tol {
        if cycles >= cfg.max_cycles {
            return Err(Error::NotConverged {
                solver: "monotone multigrid",
                iterations: cycles,
                residual: res,
                history,
            });
        }
        x = mmg_vcycle(h, b, bounds, &x)?;
        cycles += 1;
        if cfg.active_set_polish {
            if let Some(p) = polish(a, b, bounds, &x) {
                if energy(a, b, &p) <= energy(a, b, &x) {
                    x = p;
                }
            }
        }
        res = projected_residual(a, b, bounds, &x);
        if !res.is_finite() {
            return Err(Error::NonFinite("obstacle iterate"));
        }
        history.push(res);
    }
    Ok(ObstacleSolve {
        x,
        cycles,
        residual: res,
        history,
    })
}

/// Repeated projected Gauss-Seidel on a single level.
pub fn pgs_solve(
    a: &RankOneUpdated,
    b: &[f64],
    bounds: &ObstacleBounds,
    x0: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<ObstacleSolve> {
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut res = projected_residual(a, b, bounds, &x);
    let mut history = vec![res];
    let mut sweeps = 0;
    while res > tol {
        if sweeps >= max_sweeps {
            return Err(Error::NotConverged {
                solver: "projected Gauss-Seidel",
                iterations: sweeps,
                residual: res,
                history,
            });
        }
        a.gauss_seidel(b, &mut x, false, Some((&bounds.lower, &bounds.upper)));
        sweeps += 1;
        res = projected_residual(a, b, bounds, &x);
        history.push(res);
    }
    Ok(ObstacleSolve {
        x,
        cycles: sweeps,
        residual: res,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::super::aggregation::{build_aggregation_hierarchy, AggregationParams};
    use super::*;
    use crate::linalg::CsrMatrix;

    fn lap1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn pgs_identity_projects() {
        let a = RankOneUpdated::plain(CsrMatrix::identity(3));
        let bounds = ObstacleBounds::constant(3, -1.0, 1.0).unwrap();
        let x = pgs_sweep(&a, &[2.0; 3], &bounds, &[0.0; 3]).unwrap();
        assert_eq!(x, vec![1.0; 3]);
    }

    #[test]
    fn pgs_lower_triangular_exact() {
        let a = RankOneUpdated::plain(
            CsrMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (1, 0, 1.0), (1, 1, 4.0), (2, 1, -1.0), (2, 2, 1.0)])
                .unwrap(),
        );
        let b = [2.0, 5.0, 0.0];
        let x = pgs_sweep(&a, &b, &ObstacleBounds::unbounded(3), &[0.0; 3]).unwrap();
        assert_eq!(x, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn saturation() {
        let a = RankOneUpdated::plain(lap1d(20, 0.5).scaled(3.0));
        let h = build_aggregation_hierarchy(&a, &AggregationParams { coarse_size: 4, ..Default::default() }).unwrap();
        let bounds = ObstacleBounds::constant(20, -1.0, 1.0).unwrap();
        let s = solve_obstacle(&h, &vec![100.0; 20], &bounds, None, &Default::default()).unwrap();
        assert!(s.x.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn unbounded_equals_linear_solve() {
        let a = RankOneUpdated::symmetric(lap1d(50, 0.01), vec![0.1; 50]).unwrap();
        let h = build_aggregation_hierarchy(&a, &AggregationParams { coarse_size: 6, ..Default::default() }).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let s = solve_obstacle(&h, &b, &ObstacleBounds::unbounded(50), None, &ObstacleConfig { tol: 1e-12, max_cycles: 500, active_set_polish: false })
            .unwrap();
        let exact = a.to_dense().unwrap().lu_solve(&b).unwrap();
        for (p, q) in s.x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-8);
        }
    }
}
