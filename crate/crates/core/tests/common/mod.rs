//! Random instances and naive reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use fedacs_core::{Activation, Batch, ModelKind, ModelSpec, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, m: usize, input_dim: usize, classes: usize) -> Batch {
    let features = uniform_vec(rng, m * input_dim, 2.0);
    let labels = (0..m).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(features, input_dim, labels).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng, kind: &str) -> ModelSpec {
    let input_dim = rng.random_range(1..6);
    let classes = rng.random_range(2..5);
    match kind {
        "linear" => ModelSpec::linear(input_dim, classes),
        "relu" => ModelSpec::mlp(input_dim, rng.random_range(1..6), classes, Activation::Relu),
        _ => ModelSpec::mlp(input_dim, rng.random_range(1..6), classes, Activation::Tanh),
    }
}

/// Models that share a direction plus noise, so similarities span a range.
pub fn random_models(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<ParamVector> {
    let base = uniform_vec(rng, dim, 1.0);
    let mix: f64 = rng.random_range(0.0..1.0);
    (0..n)
        .map(|_| {
            let noise = uniform_vec(rng, dim, 1.0);
            ParamVector::new(base.iter().zip(noise).map(|(b, z)| mix * b + z).collect())
        })
        .collect()
}

/// Naive forward pass written from the model definition: returns logits and
/// the hidden pre-activations (empty for linear models).
pub fn reference_logits(spec: &ModelSpec, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dense = |w: &[f64], input: &[f64], rows: usize| -> Vec<f64> {
        let cols = input.len();
        (0..rows)
            .map(|r| {
                let mut z = w[r * (cols + 1) + cols];
                for c in 0..cols {
                    z += w[r * (cols + 1) + c] * input[c];
                }
                z
            })
            .collect()
    };
    match spec.kind {
        ModelKind::Linear => (dense(params, x, spec.num_classes), vec![]),
        ModelKind::Mlp { hidden_dim, activation } => {
            let split = hidden_dim * (spec.input_dim + 1);
            let pre = dense(&params[..split], x, hidden_dim);
            let h: Vec<f64> = pre
                .iter()
                .map(|&a| match activation {
                    Activation::Relu => {
                        if a > 0.0 {
                            a
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => a.tanh(),
                })
                .collect();
            (dense(&params[split..], &h, spec.num_classes), pre)
        }
    }
}

/// `−log softmax(z)[y]` computed as `log Σ exp(z) − z_y` with plain sums.
pub fn reference_loss(spec: &ModelSpec, params: &[f64], batch: &Batch) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.len() {
        let (z, _) = reference_logits(spec, params, batch.row(i));
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - z[batch.labels()[i]];
    }
    total / batch.len() as f64
}

/// Smallest |pre-activation| over the batch; ReLU finite differences are only
/// meaningful away from the kink.
pub fn min_abs_preactivation(spec: &ModelSpec, params: &[f64], batch: &Batch) -> f64 {
    (0..batch.len())
        .flat_map(|i| reference_logits(spec, params, batch.row(i)).1)
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

/// `|a − b| / max(|a|, |b|)`, with denominators below `1e-6` floored there.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
