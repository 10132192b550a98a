use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gptd_bench::fixture;
use gptd_core::spgp::log_marginal_grad;
use gptd_core::{fit_exact, fit_sparse};
use std::hint::black_box;

fn sparse_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("sparse_fit");
    for n in [250, 500, 1000, 2000] {
        for m in [5, 10, 25] {
            let f = fixture(n, m);
            g.bench_with_input(BenchmarkId::new(format!("M{m}"), n), &f, |b, f| {
                b.iter(|| fit_sparse(black_box(&f.traj), &f.params, &f.z).unwrap())
            });
        }
    }
    g.finish();
}

fn exact_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_fit");
    g.sample_size(10);
    for n in [250, 500, 1000] {
        let f = fixture(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| fit_exact(black_box(&f.traj), &f.params).unwrap())
        });
    }
    g.finish();
}

fn evidence_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("log_marginal_grad");
    for n in [500, 2000] {
        let f = fixture(n, 10);
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| log_marginal_grad(black_box(&f.traj), &f.params, &f.z).unwrap())
        });
    }
    g.finish();
}

fn predict(c: &mut Criterion) {
    let f = fixture(2000, 10);
    let sparse = fit_sparse(&f.traj, &f.params, &f.z).unwrap();
    let x = f.traj.inputs[17].clone();
    c.bench_function("sparse_predict_M10", |b| b.iter(|| sparse.predict(black_box(&x)).unwrap()));
}

criterion_group!(benches, sparse_fit, exact_fit, evidence_gradient, predict);
criterion_main!(benches);
