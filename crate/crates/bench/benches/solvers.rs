use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use ufd_bench::{shifted, torus_case};
use ufd_core::{jko_step, pde_step, w2_torus, JkoParams, PdeParams};

fn bench_jko_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("jko_step");
    for n in [64, 256, 1024] {
        let (w, e, f) = torus_case(n, 1.0);
        let p = JkoParams::new(1e-3).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| jko_step(black_box(&f), &w, &e, &p).unwrap())
        });
    }
    group.finish();
}

fn bench_pde_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("pde_step");
    for n in [64, 256, 1024] {
        let (w, e, f) = torus_case(n, 1.0);
        let implicit = PdeParams::implicit(1e-3).unwrap();
        let explicit = PdeParams::explicit(1e-3).unwrap();
        group.bench_with_input(BenchmarkId::new("implicit", n), &n, |b, _| {
            b.iter(|| pde_step(black_box(&f), &w, &e, &implicit).unwrap())
        });
        // The explicit CFL bound scales like h², so n = 1024 needs thousands of substeps.
        if n <= 256 {
            group.bench_with_input(BenchmarkId::new("explicit", n), &n, |b, _| {
                b.iter(|| pde_step(black_box(&f), &w, &e, &explicit).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_w2_torus(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2_torus");
    for n in [64, 256, 1024, 4096] {
        let (w, _, f) = torus_case(n, 1.0);
        let g = shifted(&f, &w, n / 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| w2_torus(black_box(&f), black_box(&g), w.grid()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_jko_step, bench_pde_step, bench_w2_torus);
criterion_main!(benches);
