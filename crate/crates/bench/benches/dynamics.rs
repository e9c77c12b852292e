use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use osp_bench::{instance, interior_alpha};
use osp_core::dynamics::equilibrium_iterative;
use osp_core::{equilibrium_exact, Profile, ResistanceVector};

fn apply_diluted(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_diluted");
    for n in [1_000, 10_000, 100_000] {
        let inst = instance(n, 5, 1, Profile::Unbudgeted);
        let alpha = interior_alpha(&inst);
        let z = vec![0.5; n];
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| inst.matrix.apply_diluted_into(&alpha, &inst.s, &z, &mut out).unwrap())
        });
    }
    group.finish();
}

fn dense_vs_iterative(c: &mut Criterion) {
    let mut group = c.benchmark_group("equilibrium");
    group.sample_size(10);
    for n in [200, 800, 2_000] {
        let inst = instance(n, 3, 2, Profile::Unbudgeted);
        let alpha = interior_alpha(&inst);
        let res = ResistanceVector::new(alpha.clone()).unwrap();
        group.bench_with_input(BenchmarkId::new("dense", n), &n, |b, _| {
            b.iter(|| equilibrium_exact(&inst, &alpha, usize::MAX).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("iterative", n), &n, |b, _| {
            b.iter(|| equilibrium_iterative(&inst.matrix, &inst.s, &res, 1e-9, u64::MAX).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, apply_diluted, dense_vs_iterative);
criterion_main!(benches);
