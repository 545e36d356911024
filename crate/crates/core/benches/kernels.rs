use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use chsaddle::fem::{build_uniform_mesh, FemOperators};
use chsaddle::linalg::DenseMatrix;

fn operators(n_side: usize) -> FemOperators {
    FemOperators::new(&build_uniform_mesh(n_side).unwrap(), 0.02, 1e-5).unwrap()
}

fn bench_spmv(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmv");
    for n_side in [129, 257, 513] {
        let k = operators(n_side).stiffness;
        let x: Vec<f64> = (0..k.n_cols()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; k.n_rows()];
        group.bench_with_input(BenchmarkId::new("seq", n_side), &n_side, |b, _| {
            b.iter(|| k.spmv_seq(black_box(&x), &mut y))
        });
        group.bench_with_input(BenchmarkId::new("par", n_side), &n_side, |b, _| {
            b.iter(|| k.spmv_par(black_box(&x), &mut y))
        });
    }
    group.finish();
}

fn matmul_seq(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (n, m) = (a.n_rows(), b.n_cols());
    let mut out = DenseMatrix::zeros(n, m);
    for i in 0..n {
        for k in 0..a.n_cols() {
            let aik = a[(i, k)];
            if aik != 0.0 {
                let brow = b.row(k);
                let orow = out.row_mut(i);
                for j in 0..m {
                    orow[j] += aik * brow[j];
                }
            }
        }
    }
    out
}

fn bench_dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense_matmul");
    group.sample_size(10);
    for n_side in [9, 17] {
        let ops = operators(n_side);
        let k = ops.kbar().to_dense().unwrap();
        let m = ops.mass.to_dense().unwrap();
        group.bench_with_input(BenchmarkId::new("seq", n_side), &n_side, |b, _| {
            b.iter(|| matmul_seq(black_box(&k), black_box(&m)))
        });
        group.bench_with_input(BenchmarkId::new("par", n_side), &n_side, |b, _| {
            b.iter(|| k.matmul(black_box(&m)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_spmv, bench_dense);
criterion_main!(benches);
