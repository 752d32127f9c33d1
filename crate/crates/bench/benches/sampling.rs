use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use oasis_core::sampler::{drive, ImportanceSampler, OasisSampler, PassiveSampler};
use oasis_core::stratification::csf_stratify;
use oasis_core::{Oracle, OracleKind};

fn stratify(c: &mut Criterion) {
    let mut group = c.benchmark_group("csf_stratify");
    for n in [10_000, 100_000] {
        let pool = oasis_bench::pool(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &pool, |b, pool| {
            b.iter(|| csf_stratify(black_box(pool), 30, 2 * 30 * 30).unwrap())
        });
    }
    group.finish();
}

fn iterations(c: &mut Criterion) {
    let pool = oasis_bench::pool(20_000);
    let config = oasis_bench::config(1_000);
    let mut group = c.benchmark_group("1000_iterations");
    group.bench_function("oasis", |b| {
        b.iter_batched(
            || (OasisSampler::new(&pool, &config).unwrap(), Oracle::new(OracleKind::Deterministic)),
            |(mut s, mut o)| drive(&mut s, &pool, &mut o, config.iterations).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("passive", |b| {
        b.iter_batched(
            || (PassiveSampler::new(&pool, &config).unwrap(), Oracle::new(OracleKind::Deterministic)),
            |(mut s, mut o)| drive(&mut s, &pool, &mut o, config.iterations).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn importance_setup(c: &mut Criterion) {
    let pool = oasis_bench::pool(100_000);
    let config = oasis_bench::config(1);
    c.bench_function("is_construction_100k", |b| {
        b.iter(|| ImportanceSampler::new(black_box(&pool), &config).unwrap())
    });
    c.bench_function("oasis_construction_100k", |b| {
        b.iter(|| OasisSampler::new(black_box(&pool), &config).unwrap())
    });
}

criterion_group!(benches, stratify, iterations, importance_setup);
criterion_main!(benches);
