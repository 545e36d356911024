use chsaddle::fem::{build_uniform_mesh, FemOperators};
use chsaddle::linalg::{
    dense_generalized_eig, gmres, jacobi_eigen, sherman_woodbury_solve, CsrMatrix, DenseMatrix,
    GmresConfig, Identity,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.add_scaled(0.5, &g.transpose(), 0.5).unwrap()
}

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| a[(i, j)])
}

#[test]
fn jacobi_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [5, 17, 40] {
        let a = random_sym(n, &mut rng);
        let ours = jacobi_eigen(&a, false).unwrap().values;
        let mut theirs: Vec<f64> = SymmetricEigen::new(to_na(&a)).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
        }
    }
}

#[test]
fn generalized_pencil_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 25;
    let a = random_sym(n, &mut rng);
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = g.matmul(&g.transpose()).unwrap().add_scaled(1.0, &DenseMatrix::identity(n), 0.5).unwrap();
    let eig = dense_generalized_eig(&a, &b, true).unwrap();
    assert!(eig.max_residual(&a, &b).unwrap() < 1e-12);
    let binv_a = to_na(&b).lu().solve(&to_na(&a)).unwrap();
    let mut theirs: Vec<f64> = binv_a.complex_eigenvalues().iter().map(|z| z.re).collect();
    theirs.sort_by(f64::total_cmp);
    for (x, y) in eig.values.iter().zip(&theirs) {
        assert!((x - y).abs() < 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
    }
}

#[test]
fn mass_and_stiffness_identities() {
    let mesh = build_uniform_mesh(9).unwrap();
    let ops = FemOperators::new(&mesh, 0.02, 1e-5).unwrap();
    let ones = vec![1.0; ops.n()];
    let total: f64 = ops.mass.spmv(&ones).unwrap().iter().sum();
    assert!((total - 1.0).abs() < 1e-14);
    let k1 = ops.stiffness.spmv(&ones).unwrap();
    assert!(k1.iter().all(|v| v.abs() < 1e-13));
    let m1 = ops.mass.spmv(&ones).unwrap();
    for (p, q) in m1.iter().zip(&ops.m) {
        assert!((p - q).abs() < 1e-15);
    }
    assert!(ops.mass.is_symmetric(0.0) && ops.stiffness.is_symmetric(0.0));
}

#[test]
fn gmres_solves_nonsymmetric_system() {
    let n = 60;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 4.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.5));
            t.push((i + 1, i, -0.5));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, t).unwrap();
    let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    let cfg = GmresConfig { restart: 10, max_iters: 500, rel_tol: 1e-12 };
    let out = gmres(&a, &Identity(n), &b, None, &cfg).unwrap();
    assert!(out.converged);
    let dense = a.to_dense().unwrap();
    let x = to_na(&dense).lu().solve(&DVector::from_vec(b)).unwrap();
    for (p, q) in out.x.iter().zip(x.iter()) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn woodbury_matches_dense_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20;
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = g.matmul(&g.transpose()).unwrap().add_scaled(1.0, &DenseMatrix::identity(n), 1.0).unwrap();
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = sherman_woodbury_solve(|r| Ok((a.lu_solve(r)?, 1)), &u, &v, &b).unwrap();
    let mut full = a.clone();
    full.add_outer(1.0, &u, &v);
    let x = full.lu_solve(&b).unwrap();
    for (p, q) in s.x.iter().zip(&x) {
        assert!((p - q).abs() < 1e-10);
    }
}
