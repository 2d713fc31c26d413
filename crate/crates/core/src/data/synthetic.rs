use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng::{stream, STREAM_DATA};

const CENTER_ATTEMPTS: usize = 1000;

/// Gaussian blobs, one class per blob, with centres pairwise at least
/// `separation` apart. Samples are ordered by class.
pub fn make_synthetic_clusters(
    n_clusters: usize,
    input_dim: usize,
    samples_per_cluster: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_clusters < 2 {
        return Err(Error::contract("need at least 2 clusters"));
    }
    if input_dim < 2 {
        return Err(Error::contract("need input_dim of at least 2"));
    }
    if samples_per_cluster == 0 {
        return Err(Error::contract("samples_per_cluster must be positive"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::contract("separation must be positive"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::contract("noise_sigma must be non-negative"));
    }

    let mut rng = stream(seed, &[STREAM_DATA]);
    let centers = sample_centers(n_clusters, input_dim, separation, &mut rng);

    let mut batch = Batch::empty(input_dim);
    let mut row = vec![0.0; input_dim];
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_cluster {
            for (r, c) in row.iter_mut().zip(center) {
                let z: f64 = rng.sample(StandardNormal);
                *r = c + noise_sigma * z;
            }
            batch.push(&row, class);
        }
    }
    LabeledDataset::new(batch, n_clusters)
}

/// Rejection sampling from an isotropic Gaussian whose radius grows until
/// every centre clears the separation.
fn sample_centers<R: Rng>(k: usize, dim: usize, separation: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let mut radius = separation;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut failures = 0;
    while centers.len() < k {
        let cand: Vec<f64> = (0..dim)
            .map(|_| radius * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ok = centers.iter().all(|c| {
            let d2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= separation
        });
        if ok {
            centers.push(cand);
        } else {
            failures += 1;
            if failures % CENTER_ATTEMPTS == 0 {
                radius *= 1.5;
            }
        }
    }
    centers
}
