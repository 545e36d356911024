use super::aggregation::Hierarchy;
use crate::error::{check_len, Error, Result};
use crate::linalg::rank_one::{prolongate_add, restrict};
use crate::linalg::{axpy, dot, norm2, DenseMatrix, LinearOperator, Preconditioner};

/// Symmetric Gauss-Seidel sweeps on a coarsest level without a factor.
const COARSE_SWEEPS: usize = 4;

/// Consecutive residual increases that count as divergence.
const DIVERGENCE_CYCLES: usize = 5;

fn residual(op: &impl LinearOperator, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = op.apply_vec(x);
    b.iter().zip(&ax).map(|(p, q)| p - q).collect()
}

fn vcycle_level(h: &Hierarchy, l: usize, b: &[f64], x: &mut [f64]) {
    let level = &h.levels[l];
    let op = &level.op;
    if l + 1 == h.levels.len() {
        match &h.coarse_factor {
            Some(f) => x.copy_from_slice(&DenseMatrix::cholesky_solve(f, b)),
            None => {
                for _ in 0..COARSE_SWEEPS {
                    op.gauss_seidel(b, x, false, None);
                    op.gauss_seidel(b, x, true, None);
                }
            }
        }
        return;
    }
    op.gauss_seidel(b, x, false, None);
    let r = residual(op, b, x);
    let rc = restrict(&r, &level.aggregate, level.n_coarse);
    let mut xc = vec![0.0; level.n_coarse];
    vcycle_level(h, l + 1, &rc, &mut xc);
    if h.correction_scale != 1.0 {
        xc.iter_mut().for_each(|v| *v *= h.correction_scale);
    }
    prolongate_add(&xc, &level.aggregate, x);
    op.gauss_seidel(b, x, true, None);
}

/// One V(1,1) cycle: forward Gauss-Seidel before and backward after the
/// coarse correction, exact solve on the coarsest level when available.
pub fn amg_vcycle(h: &Hierarchy, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    let n = h.finest().n();
    check_len("amg rhs", n, b.len())?;
    check_len("amg initial guess", n, x0.len())?;
    let mut x = x0.to_vec();
    vcycle_level(h, 0, b, &mut x);
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct AmgSolve {
    pub x: Vec<f64>,
    pub cycles: usize,
    pub rel_residual: f64,
    pub history: Vec<f64>,
}

/// Conjugate gradients preconditioned by one V-cycle per iteration, until
/// `|b - A x| <= rel_tol |b|`. `history` holds the relative residual after
/// every cycle.
pub fn amg_solve(
    h: &Hierarchy,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_cycles: usize,
) -> Result<AmgSolve> {
    let op = h.finest();
    let n = op.n();
    check_len("amg rhs", n, b.len())?;
    if let Some(x0) = x0 {
        check_len("amg initial guess", n, x0.len())?;
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(AmgSolve {
            x: vec![0.0; n],
            cycles: 0,
            rel_residual: 0.0,
            history: vec![],
        });
    }
    let mut r = residual(op, b, &x);
    let mut rel = norm2(&r) / bnorm;
    if !rel.is_finite() {
        return Err(Error::NonFinite("amg residual"));
    }
    let mut history = vec![rel];
    let mut growth = 0;
    let mut cycles = 0;
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut rz_old = 0.0;
    while rel > rel_tol {
        if cycles >= max_cycles {
            return Err(Error::NotConverged {
                solver: "amg",
                iterations: cycles,
                residual: rel,
                history,
            });
        }
        z.fill(0.0);
        vcycle_level(h, 0, &r, &mut z);
        let rz = dot(&r, &z);
        if cycles == 0 {
            p.copy_from_slice(&z);
        } else {
            let beta = rz / rz_old;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        rz_old = rz;
        let ap = op.apply_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonFinite("amg search direction"));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        cycles += 1;
        let new = norm2(&r) / bnorm;
        if !new.is_finite() {
            return Err(Error::NonFinite("amg iterate"));
        }
        growth = if new > rel { growth + 1 } else { 0 };
        rel = new;
        history.push(rel);
        if growth >= DIVERGENCE_CYCLES {
            return Err(Error::Diverged {
                solver: "amg",
                cycles: growth,
                residual: rel,
            });
        }
    }
    Ok(AmgSolve {
        x,
        cycles,
        rel_residual: rel,
        history,
    })
}

/// Mean residual reduction per cycle, `(r_k / r_0)^(1/k)`.
pub fn mean_contraction(history: &[f64]) -> Option<f64> {
    let k = history.len().checked_sub(1).filter(|&k| k > 0)?;
    Some((history[k] / history[0]).powf(1.0 / k as f64))
}

/// One V-cycle from a zero initial guess, a symmetric preconditioner.
pub struct AmgPreconditioner<'a>(pub &'a Hierarchy);

impl Preconditioner for AmgPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.0.finest().n()
    }
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.fill(0.0);
        vcycle_level(self.0, 0, r, z);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::aggregation::{build_aggregation_hierarchy, AggregationParams};
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, build_uniform_mesh};
    use crate::linalg::RankOneUpdated;
    use crate::truncation::{truncate_sparse, TruncationMask};

    fn khat(n_side: usize, frac: f64) -> RankOneUpdated {
        let mesh = build_uniform_mesh(n_side).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let m = TruncationMask::random(mesh.n_nodes(), frac, 1);
        RankOneUpdated::plain(truncate_sparse(&k, &m).unwrap())
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = khat(9, 0.1);
        let h = build_aggregation_hierarchy(&a, &AggregationParams::default()).unwrap();
        let x = amg_vcycle(&h, &vec![0.0; 81], &vec![0.0; 81]).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_dense_solve_n81() {
        let a = khat(9, 0.1);
        let h = build_aggregation_hierarchy(
            &a,
            &AggregationParams {
                coarse_size: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(h.n_levels() > 1);
        let b: Vec<f64> = (0..81).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let s = amg_solve(&h, &b, None, 1e-10, 500).unwrap();
        let exact = a.to_dense().unwrap().lu_solve(&b).unwrap();
        let err = norm2(&crate::linalg::sub(&s.x, &exact)) / norm2(&exact);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn contraction_on_mmatrix_h32() {
        let a = khat(33, 0.05);
        let h = build_aggregation_hierarchy(&a, &AggregationParams::default()).unwrap();
        let b: Vec<f64> = (0..a.n()).map(|i| ((i * 13) % 17) as f64 / 17.0 - 0.5).collect();
        let s = amg_solve(&h, &b, None, 1e-8, 200).unwrap();
        let rate = mean_contraction(&s.history).unwrap();
        assert!(rate < 0.5, "contraction {rate}, levels {:?}", h.sizes());
    }

    #[test]
    fn cycle_count_is_mesh_stable() {
        let counts: Vec<usize> = [33, 65, 129]
            .iter()
            .map(|&ns| {
                let a = khat(ns, 0.05);
                let h = build_aggregation_hierarchy(&a, &AggregationParams::default()).unwrap();
                amg_solve(&h, &vec![1.0; a.n()], None, 1e-8, 200).unwrap().cycles
            })
            .collect();
        assert!(counts[2] <= counts[0] + 8, "{counts:?}");
    }

    #[test]
    fn mass_dominated_block_still_converges() {
        let mesh = build_uniform_mesh(33).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        let a = RankOneUpdated::plain(k.linear_combination(1.0, &m, 2236.0).unwrap());
        let h = build_aggregation_hierarchy(&a, &AggregationParams::default()).unwrap();
        let b = vec![1.0; a.n()];
        let s = amg_solve(&h, &b, None, 1e-8, 100).unwrap();
        assert!(s.cycles < 40);
    }
}
