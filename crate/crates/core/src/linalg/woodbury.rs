use crate::error::{check_len, Error, Result};

/// Denominators `|1 + v^T A^{-1} u|` below this are rejected.
pub const SINGULAR_UPDATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WoodburySolution {
    pub x: Vec<f64>,
    /// Iterations of the solve with the right-hand side.
    pub it1: usize,
    /// Iterations of the solve with the update vector (0 if skipped).
    pub it2: usize,
    pub denominator: f64,
}

/// Solves `(A + u v^T) x = b` given a solver for `A`.
///
/// `solve_base(rhs)` returns `A^{-1} rhs` together with its iteration count.
pub fn sherman_woodbury_solve<F>(
    mut solve_base: F,
    u: &[f64],
    v: &[f64],
    b: &[f64],
) -> Result<WoodburySolution>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    check_len("woodbury u", b.len(), u.len())?;
    check_len("woodbury v", b.len(), v.len())?;
    let (z1, it1) = solve_base(b)?;
    check_len("woodbury base solution", b.len(), z1.len())?;
    if u.iter().all(|x| *x == 0.0) || v.iter().all(|x| *x == 0.0) {
        return Ok(WoodburySolution {
            x: z1,
            it1,
            it2: 0,
            denominator: 1.0,
        });
    }
    let (z2, it2) = solve_base(u)?;
    let denom = 1.0 + super::dot(v, &z2);
    if !denom.is_finite() {
        return Err(Error::NonFinite("woodbury denominator"));
    }
    if denom.abs() < SINGULAR_UPDATE_TOL {
        return Err(Error::SingularUpdate(denom.abs()));
    }
    let f = super::dot(v, &z1) / denom;
    let x = z1.iter().zip(&z2).map(|(a, b)| a - f * b).collect();
    Ok(WoodburySolution {
        x,
        it1,
        it2,
        denominator: denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn matches_dense_inverse() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]);
        let u = [1.0, -1.0, 2.0];
        let v = [0.5, 0.25, 1.0];
        let b = [1.0, 2.0, 3.0];
        let mut full = a.clone();
        full.add_outer(1.0, &u, &v);
        let exact = full.lu_solve(&b).unwrap();
        let sol = sherman_woodbury_solve(|r| Ok((a.lu_solve(r).unwrap(), 1)), &u, &v, &b).unwrap();
        for (p, q) in sol.x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-12);
        }
        assert_eq!((sol.it1, sol.it2), (1, 1));
    }

    #[test]
    fn zero_update_uses_one_solve() {
        let mut calls = 0;
        let sol = sherman_woodbury_solve(
            |r| {
                calls += 1;
                Ok((r.iter().map(|x| x / 2.0).collect(), 3))
            },
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[2.0, 4.0],
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(sol.x, vec![1.0, 2.0]);
        assert_eq!(sol.it2, 0);
    }

    #[test]
    fn singular_update_detected() {
        // A = I, u = -v/|v|^2 makes 1 + v^T u = 0.
        let r = sherman_woodbury_solve(|r| Ok((r.to_vec(), 0)), &[-1.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::SingularUpdate(_))));
    }
}
