use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedacs_bench::synthetic_shards;
use fedacs_core::federated::{local_rng, local_update, run_round};
use fedacs_core::model::loss_and_gradient;
use fedacs_core::*;
use std::hint::black_box;

fn gradient(c: &mut Criterion) {
    let (linear, shards) = synthetic_shards(4, 20, 10);
    let mlp = ModelSpec::mlp(20, 32, 10, Activation::Relu);
    let batch = shards[0].train.select(&(0..10).collect::<Vec<_>>());
    let mut group = c.benchmark_group("loss_and_gradient");
    for (name, spec) in [("linear", linear), ("mlp", mlp)] {
        let params = ParamVector::new(vec![0.01; spec.param_dim()]);
        group.bench_with_input(BenchmarkId::from_parameter(name), &spec, |b, s| {
            b.iter(|| loss_and_gradient(s, black_box(&params), &batch).unwrap())
        });
    }
    group.finish();
}

fn local(c: &mut Criterion) {
    let (spec, shards) = synthetic_shards(4, 20, 10);
    let obj = ShardObjective::new(spec, &shards[0]);
    let start = ParamVector::zeros(spec.param_dim());
    c.bench_function("local_update/5_steps", |b| {
        b.iter(|| local_update(&obj, black_box(&start), 0.1, 5, 10, &mut local_rng(0, 1, 0), 1, 0).unwrap())
    });
}

fn round(c: &mut Criterion) {
    let (spec, shards) = synthetic_shards(20, 20, 10);
    let objs: Vec<_> = shards.iter().map(|s| ShardObjective::new(spec, s)).collect();
    let mut group = c.benchmark_group("round");
    for algorithm in [Algorithm::Fedacs, Algorithm::Fedavg] {
        let cfg = AlgoConfig {
            algorithm,
            local_steps: 5,
            ..Default::default()
        };
        let state = FederatedState::new(ParamVector::new(vec![0.01; spec.param_dim()]), objs.len(), algorithm).unwrap();
        let state = run_round(&state, &cfg, &objs).unwrap().state;
        group.bench_with_input(BenchmarkId::from_parameter(algorithm), &state, |b, s| {
            b.iter(|| run_round(black_box(s), &cfg, &objs).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, local, round);
criterion_main!(benches);
