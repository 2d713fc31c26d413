//! Shared fixtures for the benchmarks.

use fedacs_core::data::make_synthetic_clusters;
use fedacs_core::{ClientShard, ModelSpec, ParamVector, PartitionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random models of length `dim`, all sharing a common direction so the
/// similarity matrix is not trivially sparse.
pub fn random_models(n: usize, dim: usize, seed: u64) -> Vec<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..n)
        .map(|_| ParamVector::new(base.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect()))
        .collect()
}

/// A synthetic classification problem split over `n_clients`.
pub fn synthetic_shards(n_clients: usize, input_dim: usize, classes: usize) -> (ModelSpec, Vec<ClientShard>) {
    let data = make_synthetic_clusters(classes, input_dim, 100, 3.0, 1.0, 7).expect("synthetic data");
    let cfg = PartitionConfig {
        n_clients,
        ..Default::default()
    };
    let shards = fedacs_core::data::partition(&data, &cfg).expect("partition");
    (ModelSpec::linear(input_dim, classes), shards)
}
