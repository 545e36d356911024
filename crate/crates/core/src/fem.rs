//! P1 finite elements on a uniform triangulation of the unit square.

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CsrMatrix, Identity, RankOneUpdated};

/// Uniform grid of `n_side x n_side` nodes. Node `(i, j)` (column `i`,
/// row `j`, origin at the lower-left corner) has index `j * n_side + i`.
/// Each square is cut along its lower-left to upper-right diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n_side: usize,
    pub coords: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n_side - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.n_side + i
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.coords[a], self.coords[b], self.coords[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    fn checked_area(&self, e: usize) -> Result<f64> {
        let area = self.signed_area(e);
        if !(area > 0.0) {
            return Err(Error::DegenerateElement { element: e, area });
        }
        Ok(area)
    }
}

pub fn build_uniform_mesh(n_side: usize) -> Result<Mesh> {
    if n_side < 2 {
        return Err(Error::InvalidArgument(format!(
            "mesh needs at least 2 nodes per side, got {n_side}"
        )));
    }
    let h = 1.0 / (n_side - 1) as f64;
    let mut coords = Vec::with_capacity(n_side * n_side);
    for j in 0..n_side {
        for i in 0..n_side {
            coords.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut elements = Vec::with_capacity(2 * (n_side - 1) * (n_side - 1));
    for j in 0..n_side - 1 {
        for i in 0..n_side - 1 {
            let a = j * n_side + i;
            let b = a + 1;
            let c = a + n_side + 1;
            let d = a + n_side;
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Ok(Mesh {
        n_side,
        coords,
        elements,
    })
}

fn assemble<F>(mesh: &Mesh, local: F) -> Result<CsrMatrix>
where
    F: Fn(usize, f64) -> [[f64; 3]; 3],
{
    let n = mesh.n_nodes();
    let mut trip = Vec::with_capacity(9 * mesh.elements.len());
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let area = mesh.checked_area(e)?;
        let k = local(e, area);
        for a in 0..3 {
            for b in 0..3 {
                trip.push((nodes[a], nodes[b], k[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, trip)
}

/// Consistent mass matrix with element entries `|K| (1 + delta_ij) / 12`.
pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble(mesh, |_, area| {
        let mut k = [[area / 12.0; 3]; 3];
        for (i, row) in k.iter_mut().enumerate() {
            row[i] = area / 6.0;
        }
        k
    })
}

/// Gradients of the three barycentric functions of element `e`.
fn gradients(mesh: &Mesh, e: usize, area: f64) -> [[f64; 2]; 3] {
    let nodes = mesh.elements[e];
    let p = nodes.map(|i| mesh.coords[i]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [
            (p[j][1] - p[k][1]) / (2.0 * area),
            (p[k][0] - p[j][0]) / (2.0 * area),
        ];
    }
    g
}

/// Neumann stiffness matrix with element entries `(b_i b_j + c_i c_j) |K|`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble(mesh, |e, area| {
        let g = gradients(mesh, e, area);
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * area;
            }
        }
        k
    })
}

/// Integrals of the hat functions, `m_p = sum |K| / 3` over the fan of `p`.
pub fn assemble_m_vector(mesh: &Mesh) -> Result<Vec<f64>> {
    let mut m = vec![0.0; mesh.n_nodes()];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let area = mesh.checked_area(e)?;
        for &p in nodes {
            m[p] += area / 3.0;
        }
    }
    Ok(m)
}

/// Assembled operators of the discrete problem together with `eps`, `tau`
/// and `eta = eps * tau`.
#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub m: Vec<f64>,
    pub eps: f64,
    pub tau: f64,
    pub eta: f64,
}

impl FemOperators {
    pub fn new(mesh: &Mesh, eps: f64, tau: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite() && tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps and tau must be positive, got eps={eps}, tau={tau}"
            )));
        }
        Ok(Self {
            mass: assemble_mass(mesh)?,
            stiffness: assemble_stiffness(mesh)?,
            m: assemble_m_vector(mesh)?,
            eps,
            tau,
            eta: eps * tau,
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    /// Same matrices with a different `eta` (for parameter sweeps).
    pub fn with_eta(&self, eta: f64) -> Self {
        Self {
            eta,
            ..self.clone()
        }
    }

    /// `Kbar = K + m m^T` as sparse plus rank-one.
    pub fn kbar(&self) -> RankOneUpdated {
        RankOneUpdated {
            base: self.stiffness.clone(),
            u: self.m.clone(),
            v: self.m.clone(),
        }
    }

    pub fn apply_kbar(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_kbar", self.n(), x.len())?;
        let mut y = self.stiffness.spmv(x)?;
        linalg::axpy(linalg::dot(&self.m, x), &self.m, &mut y);
        Ok(y)
    }

    /// Total mass `1^T M u`.
    pub fn mass_integral(&self, u: &[f64]) -> f64 {
        linalg::dot(&self.m, u)
    }
}

/// Discrete L2 projection of `f` onto the P1 space: solves `M u = b` with
/// `b_i = int f phi_i`, using the edge-midpoint rule (exact for quadratics).
pub fn l2_project<F>(mesh: &Mesh, mass: &CsrMatrix, f: F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let n = mesh.n_nodes();
    let mut b = vec![0.0; n];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let area = mesh.checked_area(e)?;
        let p = nodes.map(|i| mesh.coords[i]);
        for k in 0..3 {
            let (i, j) = (k, (k + 1) % 3);
            let mid = [0.5 * (p[i][0] + p[j][0]), 0.5 * (p[i][1] + p[j][1])];
            let fm = f(mid[0], mid[1]);
            if !fm.is_finite() {
                return Err(Error::NonFinite("projected function"));
            }
            // phi = 1/2 at both endpoints of the edge, 0 at the opposite vertex
            b[nodes[i]] += area / 3.0 * 0.5 * fm;
            b[nodes[j]] += area / 3.0 * 0.5 * fm;
        }
    }
    let out = linalg::cg(mass, &Identity(n), &b, None, 1e-14, 10 * n + 100)?;
    if !out.converged && out.rel_residual > 1e-12 {
        return Err(Error::NotConverged {
            solver: "l2 projection",
            iterations: out.iterations,
            residual: out.rel_residual,
            history: vec![],
        });
    }
    Ok(out.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_mesh_counts() {
        let m = build_uniform_mesh(2).unwrap();
        assert_eq!((m.n_nodes(), m.elements.len()), (4, 2));
        let m = build_uniform_mesh(3).unwrap();
        assert_eq!((m.n_nodes(), m.elements.len()), (9, 8));
        assert!(build_uniform_mesh(1).is_err());
        assert_eq!(build_uniform_mesh(257).unwrap().n_nodes(), 66049);
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        let m = build_uniform_mesh(9).unwrap();
        let total: f64 = (0..m.elements.len()).map(|e| m.signed_area(e)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((0..m.elements.len()).all(|e| m.signed_area(e) > 0.0));
    }

    #[test]
    fn mass_row_sums_equal_m_vector() {
        let mesh = build_uniform_mesh(6).unwrap();
        let mass = assemble_mass(&mesh).unwrap();
        let m = assemble_m_vector(&mesh).unwrap();
        for (r, mi) in mass.row_sums().iter().zip(&m) {
            assert!((r - mi).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_kills_constants() {
        let mesh = build_uniform_mesh(7).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(k.is_symmetric(0.0));
    }

    #[test]
    fn kbar_dense_oracle() {
        let mesh = build_uniform_mesh(3).unwrap();
        let ops = FemOperators::new(&mesh, 0.02, 1e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut d = ops.stiffness.to_dense().unwrap();
        d.add_outer(1.0, &ops.m, &ops.m);
        let y = ops.apply_kbar(&x).unwrap();
        for (p, q) in y.iter().zip(d.matvec(&x)) {
            assert!((p - q).abs() < 1e-13);
        }
        assert!(ops.apply_kbar(&[1.0]).is_err());
    }

    #[test]
    fn l2_projection_reproduces_linear_functions() {
        let mesh = build_uniform_mesh(5).unwrap();
        let mass = assemble_mass(&mesh).unwrap();
        let u = l2_project(&mesh, &mass, |x, y| 0.3 * x - 0.5 * y + 0.1).unwrap();
        for (p, c) in u.iter().zip(&mesh.coords) {
            assert!((p - (0.3 * c[0] - 0.5 * c[1] + 0.1)).abs() < 1e-12);
        }
    }
}
