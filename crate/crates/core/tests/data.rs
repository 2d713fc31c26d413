use fedacs_core::data::{make_synthetic_clusters, partition, subsample_train};
use fedacs_core::federated::{local_rng, local_update};
use fedacs_core::model::accuracy;
use fedacs_core::*;

fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

#[test]
fn label_entropy_grows_with_dirichlet_alpha() {
    let data = make_synthetic_clusters(10, 2, 200, 2.0, 0.5, 1).unwrap();
    let mut means = Vec::new();
    for alpha in [0.1, 0.5, 1.0, 5.0, 10.0] {
        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..5 {
            let cfg = PartitionConfig {
                n_clients: 20,
                dirichlet_alpha: alpha,
                seed,
                ..Default::default()
            };
            for s in partition(&data, &cfg).unwrap() {
                total += label_entropy(&s.class_counts(10));
                count += 1;
            }
        }
        means.push(total / count as f64);
    }
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn separable_clusters_are_learnable_by_a_linear_model() {
    let data = make_synthetic_clusters(2, 3, 200, 10.0, 0.1, 4).unwrap();
    let shard = ClientShard {
        client_id: 0,
        train: data.samples.clone(),
        test: data.samples.clone(),
        train_index: (0..data.len()).collect(),
        test_index: (0..data.len()).collect(),
    };
    let spec = ModelSpec::linear(3, 2);
    let obj = ShardObjective::new(spec, &shard);
    let w = local_update(
        &obj,
        &ParamVector::zeros(spec.param_dim()),
        0.05,
        300,
        400,
        &mut local_rng(0, 1, 0),
        1,
        0,
    )
    .unwrap();
    assert!(accuracy(&spec, &w, &data.samples).unwrap() > 0.99);
}

#[test]
fn subsample_differs_across_seeds() {
    let data = make_synthetic_clusters(5, 2, 125, 2.0, 0.5, 2).unwrap();
    let shards = partition(
        &data,
        &PartitionConfig {
            n_clients: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let a = subsample_train(&shards[0], 50, 1).unwrap();
    let b = subsample_train(&shards[0], 50, 2).unwrap();
    assert_ne!(a.train_index, b.train_index);
    assert_eq!(a.test, shards[0].test);
}

#[test]
fn partition_is_deterministic() {
    let data = make_synthetic_clusters(4, 2, 50, 2.0, 0.5, 3).unwrap();
    for scheme in [PartitionScheme::Dirichlet, PartitionScheme::Pathological] {
        let cfg = PartitionConfig {
            scheme,
            n_clients: 6,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(partition(&data, &cfg).unwrap(), partition(&data, &cfg).unwrap());
    }
}
