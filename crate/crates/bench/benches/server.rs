use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedacs_bench::random_models;
use fedacs_core::similarity::{attention_aggregate, quantile_threshold, similarity_matrix};
use std::hint::black_box;

fn similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_matrix");
    for n in [10, 50, 100] {
        let models = random_models(n, 2_000, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &models, |b, m| {
            b.iter(|| similarity_matrix(black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn aggregation(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention_aggregate");
    for n in [10, 50, 100] {
        let models = random_models(n, 2_000, 2);
        let s = similarity_matrix(&models).unwrap();
        let delta = quantile_threshold(&s, 0.5).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &models, |b, m| {
            b.iter(|| attention_aggregate(black_box(m), &s, delta).unwrap())
        });
    }
    group.finish();
}

fn threshold(c: &mut Criterion) {
    let s = similarity_matrix(&random_models(100, 50, 3)).unwrap();
    c.bench_function("quantile_threshold/100", |b| {
        b.iter(|| quantile_threshold(black_box(&s), 0.5).unwrap())
    });
}

criterion_group!(benches, similarity, aggregation, threshold);
criterion_main!(benches);
