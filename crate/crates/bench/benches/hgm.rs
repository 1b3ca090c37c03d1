use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hgm_core::families::{c_cone, p_simplex, q_simplex};
use hgm_core::geometry::{face_complex_lp, DEFAULT_FEAS_TOL};
use hgm_core::oracles::mc_probability;
use hgm_core::{probability, FaceComplex, GramCache, Method, PfaffianOperator, SolverConfig};

fn bench_probability(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("probability");
    group.sample_size(10);
    for d in [4, 6, 8] {
        group.bench_with_input(BenchmarkId::new("P", d), &p_simplex(d), |b, sys| {
            b.iter(|| probability(black_box(sys), Method::Auto, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("Q", d), &q_simplex(d), |b, sys| {
            b.iter(|| probability(black_box(sys), Method::Auto, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("C", d), &c_cone(d), |b, sys| {
            b.iter(|| probability(black_box(sys), Method::Auto, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_face_complex(c: &mut Criterion) {
    let mut group = c.benchmark_group("face_complex_lp");
    for d in [3, 5, 7] {
        group.bench_with_input(BenchmarkId::from_parameter(d), &p_simplex(d), |b, sys| {
            b.iter(|| face_complex_lp(black_box(sys), DEFAULT_FEAS_TOL).unwrap())
        });
    }
    group.finish();
}

fn bench_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for d in [4, 6, 8] {
        let sys = p_simplex(d);
        let fc = FaceComplex::simplex(d);
        let op = PfaffianOperator::new(
            GramCache::new(sys.a(), &fc).unwrap(),
            &fc,
            sys.b().as_slice(),
        )
        .unwrap();
        let g = vec![1.0; fc.len()];
        let mut out = vec![0.0; fc.len()];
        group.bench_function(BenchmarkId::new("bounded", d), |b| {
            b.iter(|| op.rhs(None, black_box(sys.b().as_slice()), black_box(&g), &mut out))
        });
    }
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for d in [2, 6] {
        group.bench_with_input(BenchmarkId::new("P_1e5", d), &p_simplex(d), |b, sys| {
            b.iter(|| mc_probability(black_box(sys), 100_000, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_probability,
    bench_face_complex,
    bench_rhs,
    bench_monte_carlo
);
criterion_main!(benches);
