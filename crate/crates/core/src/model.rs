//! Flat-parameter classifiers: multinomial logistic regression and a
//! one-hidden-layer MLP, both trained with mean softmax cross-entropy.
//!
//! Parameters are stored row-major, one row per output unit, with the bias as
//! the last entry of each row:
//!
//! * linear: `num_classes` rows of `input_dim + 1`
//! * mlp: `hidden_dim` rows of `input_dim + 1`, then `num_classes` rows of
//!   `hidden_dim + 1`

use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model's parameters as one dense vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &[f64]) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += scale * b;
        }
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn distance_sq(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `a` and output `h`.
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Linear,
    Mlp { hidden_dim: usize, activation: Activation },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Linear,
            input_dim,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp { hidden_dim, activation },
            input_dim,
            num_classes,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self.kind {
            ModelKind::Linear => (self.input_dim + 1) * self.num_classes,
            ModelKind::Mlp { hidden_dim, .. } => {
                (self.input_dim + 1) * hidden_dim + (hidden_dim + 1) * self.num_classes
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::contract("model input_dim must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::contract("model needs at least 2 classes"));
        }
        if let ModelKind::Mlp { hidden_dim: 0, .. } = self.kind {
            return Err(Error::contract("mlp hidden_dim must be positive"));
        }
        Ok(())
    }

    /// Gaussian weights scaled by `scale / sqrt(fan_in)`, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> ParamVector {
        let mut out = Vec::with_capacity(self.param_dim());
        let mut layer = |rows: usize, fan_in: usize, out: &mut Vec<f64>| {
            let s = scale / (fan_in as f64).sqrt();
            for _ in 0..rows {
                for _ in 0..fan_in {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(s * z);
                }
                out.push(0.0);
            }
        };
        match self.kind {
            ModelKind::Linear => layer(self.num_classes, self.input_dim, &mut out),
            ModelKind::Mlp { hidden_dim, .. } => {
                layer(hidden_dim, self.input_dim, &mut out);
                layer(self.num_classes, hidden_dim, &mut out);
            }
        }
        ParamVector(out)
    }
}

/// Row-major feature matrix with one class label per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    features: Vec<f64>,
    input_dim: usize,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Vec<f64>, input_dim: usize, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::contract("batch input_dim must be positive"));
        }
        if features.len() != input_dim * labels.len() {
            return Err(Error::contract(format!(
                "batch has {} feature values for {} labels of width {}",
                features.len(),
                labels.len(),
                input_dim
            )));
        }
        Ok(Batch {
            features,
            input_dim,
            labels,
        })
    }

    pub fn empty(input_dim: usize) -> Self {
        Batch {
            features: Vec::new(),
            input_dim,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Copies the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch {
            features,
            input_dim: self.input_dim,
            labels,
        }
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.input_dim);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.labels
    }
}

fn check(spec: &ModelSpec, params: &[f64], batch: &Batch) -> Result<()> {
    spec.validate()?;
    if params.len() != spec.param_dim() {
        return Err(Error::contract(format!(
            "parameter length {} does not match model dimension {}",
            params.len(),
            spec.param_dim()
        )));
    }
    if batch.input_dim() != spec.input_dim {
        return Err(Error::contract(format!(
            "batch width {} does not match model input_dim {}",
            batch.input_dim(),
            spec.input_dim
        )));
    }
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    if let Some(&bad) = batch.labels().iter().find(|&&l| l >= spec.num_classes) {
        return Err(Error::contract(format!(
            "label {bad} out of range for {} classes",
            spec.num_classes
        )));
    }
    Ok(())
}

/// `out[r] = W[r] · [x, 1]` for a row-major block with rows of `x.len() + 1`.
fn affine(block: &[f64], x: &[f64], out: &mut [f64]) {
    let width = x.len() + 1;
    for (r, o) in out.iter_mut().enumerate() {
        let row = &block[r * width..(r + 1) * width];
        let mut acc = row[x.len()];
        for (w, v) in row[..x.len()].iter().zip(x) {
            acc += w * v;
        }
        *o = acc;
    }
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`, accurate for confident predictions.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let (arg, max) = argmax(logits);
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != arg)
        .map(|(_, z)| (z - max).exp())
        .sum();
    (max - logits[label]) + rest.ln_1p()
}

/// Index and value of the largest entry, first index on ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

struct Forward {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn forward_one(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Forward {
    match spec.kind {
        ModelKind::Linear => {
            let mut logits = vec![0.0; spec.num_classes];
            affine(params, x, &mut logits);
            Forward {
                hidden_pre: Vec::new(),
                hidden: Vec::new(),
                logits,
            }
        }
        ModelKind::Mlp { hidden_dim, activation } => {
            let split = hidden_dim * (spec.input_dim + 1);
            let mut hidden_pre = vec![0.0; hidden_dim];
            affine(&params[..split], x, &mut hidden_pre);
            let hidden: Vec<f64> = hidden_pre.iter().map(|&a| activation.apply(a)).collect();
            let mut logits = vec![0.0; spec.num_classes];
            affine(&params[split..], &hidden, &mut logits);
            Forward {
                hidden_pre,
                hidden,
                logits,
            }
        }
    }
}

/// Logits for every sample, row-major `m × num_classes`.
pub fn logits(spec: &ModelSpec, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
    check(spec, params, batch)?;
    let mut out = Vec::with_capacity(batch.len() * spec.num_classes);
    for i in 0..batch.len() {
        out.extend(forward_one(spec, params, batch.row(i)).logits);
    }
    Ok(out)
}

/// Mean cross-entropy of the softmax outputs over the batch.
pub fn forward_loss(spec: &ModelSpec, params: &[f64], batch: &Batch) -> Result<f64> {
    check(spec, params, batch)?;
    let total: f64 = (0..batch.len())
        .map(|i| {
            let f = forward_one(spec, params, batch.row(i));
            cross_entropy(&f.logits, batch.labels()[i])
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`forward_loss`].
pub fn gradient(spec: &ModelSpec, params: &[f64], batch: &Batch) -> Result<ParamVector> {
    loss_and_gradient(spec, params, batch).map(|(_, g)| g)
}

/// Loss and gradient in a single pass.
pub fn loss_and_gradient(spec: &ModelSpec, params: &[f64], batch: &Batch) -> Result<(f64, ParamVector)> {
    check(spec, params, batch)?;
    let m = batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let x = batch.row(i);
        let label = batch.labels()[i];
        let f = forward_one(spec, params, x);
        loss += cross_entropy(&f.logits, label);
        let mut dz = softmax(&f.logits);
        dz[label] -= 1.0;
        for v in dz.iter_mut() {
            *v /= m;
        }
        match spec.kind {
            ModelKind::Linear => accumulate_outer(&mut grad, &dz, x),
            ModelKind::Mlp { hidden_dim, activation } => {
                let split = hidden_dim * (spec.input_dim + 1);
                let (g_hidden, g_out) = grad.split_at_mut(split);
                accumulate_outer(g_out, &dz, &f.hidden);
                let out_block = &params[split..];
                let width = hidden_dim + 1;
                let da: Vec<f64> = (0..hidden_dim)
                    .map(|k| {
                        let dh: f64 = dz.iter().enumerate().map(|(c, d)| out_block[c * width + k] * d).sum();
                        dh * activation.derivative(f.hidden_pre[k], f.hidden[k])
                    })
                    .collect();
                accumulate_outer(g_hidden, &da, x);
            }
        }
    }
    Ok((loss / m, ParamVector(grad)))
}

/// `block[r] += delta[r] * [x, 1]`
fn accumulate_outer(block: &mut [f64], delta: &[f64], x: &[f64]) {
    let width = x.len() + 1;
    for (r, &d) in delta.iter().enumerate() {
        let row = &mut block[r * width..(r + 1) * width];
        for (g, v) in row[..x.len()].iter_mut().zip(x) {
            *g += d * v;
        }
        row[x.len()] += d;
    }
}

/// Share of samples whose top logit (first index on ties) equals the label.
pub fn accuracy(spec: &ModelSpec, params: &[f64], data: &Batch) -> Result<f64> {
    check(spec, params, data)?;
    let correct = (0..data.len())
        .filter(|&i| argmax(&forward_one(spec, params, data.row(i)).logits).0 == data.labels()[i])
        .count();
    Ok(correct as f64 / data.len() as f64)
}
