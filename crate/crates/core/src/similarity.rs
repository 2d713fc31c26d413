//! Server-side aggregation: cosine similarity between client models, the
//! per-round quantile threshold, attention-weighted intermediate models and
//! the pairwise-distance regularizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Cosine of the angle between two parameter vectors, clamped to `[-1, 1]`.
///
/// A zero-norm argument yields [`Error::DegenerateModel`] whose `client` is
/// the argument position (0 or 1).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "cosine similarity of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 {
        return Err(Error::DegenerateModel { client: 0 });
    }
    if nb == 0.0 {
        return Err(Error::DegenerateModel { client: 1 });
    }
    Ok(cosine(dot(a, b), na, nb))
}

/// `dot / √(‖a‖²‖b‖²)`: one rounding in the root, so bitwise-equal vectors
/// score exactly 1 and identical clients get identical weights.
fn cosine(dot: f64, norm_sq_a: f64, norm_sq_b: f64) -> f64 {
    (dot / (norm_sq_a * norm_sq_b).sqrt()).clamp(-1.0, 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Square matrix of pairwise model similarities, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    scores: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps precomputed scores after checking symmetry, unit diagonal and range.
    pub fn from_scores(n: usize, scores: Vec<f64>) -> Result<Self> {
        if n == 0 || scores.len() != n * n {
            return Err(Error::contract(format!(
                "similarity matrix of order {n} needs {} scores, got {}",
                n * n,
                scores.len()
            )));
        }
        for i in 0..n {
            if (scores[i * n + i] - 1.0).abs() > 1e-12 {
                return Err(Error::contract(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let s = scores[i * n + j];
                if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&s) {
                    return Err(Error::contract(format!("score ({i},{j}) = {s} outside [-1, 1]")));
                }
                if (s - scores[j * n + i]).abs() > 1e-9 {
                    return Err(Error::contract(format!("scores ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(SimilarityMatrix { n, scores })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.scores
    }

    /// Keeps the diagonal and every score strictly above `max(delta, 0)`;
    /// everything else becomes 0. The result is still symmetric.
    pub fn thresholded(&self, delta: f64) -> SimilarityMatrix {
        let n = self.n;
        let scores = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if is_neighbor(i, j, self.scores[k], delta) {
                    self.scores[k]
                } else {
                    0.0
                }
            })
            .collect();
        SimilarityMatrix { n, scores }
    }

    fn check_models(&self, models: &[ParamVector]) -> Result<()> {
        if models.len() != self.n {
            return Err(Error::contract(format!(
                "{} models for a similarity matrix of order {}",
                models.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// Self is always a neighbour; others must clear both δ and zero.
fn is_neighbor(i: usize, j: usize, s: f64, delta: f64) -> bool {
    i == j || (s > delta && s > 0.0)
}

/// Pairwise cosine similarities. Each unordered pair is computed once and
/// mirrored; the diagonal is exactly 1.
pub fn similarity_matrix(models: &[ParamVector]) -> Result<SimilarityMatrix> {
    let n = models.len();
    if n == 0 {
        return Err(Error::contract("similarity matrix of zero models"));
    }
    let d = models[0].len();
    if let Some(bad) = models.iter().position(|m| m.len() != d) {
        return Err(Error::contract(format!(
            "model {bad} has length {} != {d}",
            models[bad].len()
        )));
    }
    let norms: Vec<f64> = models.iter().map(|m| dot(m, m)).collect();
    if let Some(client) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateModel { client });
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| cosine(dot(&models[i], &models[j]), norms[i], norms[j]))
                .collect()
        })
        .collect();
    let mut scores = vec![0.0; n * n];
    for i in 0..n {
        scores[i * n + i] = 1.0;
        for (off, &s) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            scores[i * n + j] = s;
            scores[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { n, scores })
}

/// The p-quantile of all n² entries: sort ascending and take index
/// `ceil(p·n²) - 1`, clamped into range.
pub fn quantile_threshold(s: &SimilarityMatrix, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(format!("quantile ratio {p} outside [0, 1]")));
    }
    let mut entries = s.entries().to_vec();
    entries.sort_by(f64::total_cmp);
    let len = entries.len();
    let idx = ((p * len as f64).ceil() as i64 - 1).clamp(0, len as i64 - 1) as usize;
    Ok(entries[idx])
}

/// Row-stochastic combination weights realised by one aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub n: usize,
    /// Row-major; row `i` holds the weights client `i` puts on every model.
    pub weights: Vec<f64>,
    pub threshold_delta: f64,
    pub pick_ratio_p: Option<f64>,
}

impl AttentionWeights {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }
}

/// Attention-weighted intermediate models.
///
/// For each client `i` the neighbour set is `{i}` plus every `j` with
/// `s_ij > delta` and `s_ij > 0`; `u_i` is the similarity-weighted mean of the
/// neighbours' models.
pub fn attention_aggregate(
    models: &[ParamVector],
    s: &SimilarityMatrix,
    delta: f64,
) -> Result<(Vec<ParamVector>, AttentionWeights)> {
    s.check_models(models)?;
    let n = s.n();
    let rows: Vec<(ParamVector, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = ParamVector::zeros(models[i].len());
            let mut total = 0.0;
            let mut raw = vec![0.0; n];
            for j in 0..n {
                let sij = s.get(i, j);
                if is_neighbor(i, j, sij, delta) {
                    acc.axpy(sij, &models[j]);
                    total += sij;
                    raw[j] = sij;
                }
            }
            for v in acc.iter_mut() {
                *v /= total;
            }
            for r in raw.iter_mut() {
                *r /= total;
            }
            (acc, raw)
        })
        .collect();
    let mut intermediates = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n * n);
    for (u, row) in rows {
        intermediates.push(u);
        weights.extend(row);
    }
    Ok((
        intermediates,
        AttentionWeights {
            n,
            weights,
            threshold_delta: delta,
            pick_ratio_p: None,
        },
    ))
}

/// `Σ_{i,j} s_ij ‖w_i − w_j‖²` over ordered pairs.
pub fn regularizer(models: &[ParamVector], s: &SimilarityMatrix) -> Result<f64> {
    s.check_models(models)?;
    let n = s.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += s.get(i, j) * models[i].distance_sq(&models[j]);
            }
        }
    }
    Ok(total)
}

/// Column-wise `w_i − Σ_j s_ij w_j` with the similarities held constant.
///
/// With `normalize_rows` each row of `s` is first divided by its sum. This is
/// the closed form used by the server update, not the exact derivative of
/// [`regularizer`]; see [`regularizer_exact_grad`] for that.
pub fn regularizer_grad(
    models: &[ParamVector],
    s: &SimilarityMatrix,
    normalize_rows: bool,
) -> Result<Vec<ParamVector>> {
    s.check_models(models)?;
    let n = s.n();
    (0..n)
        .map(|i| {
            let row = s.row(i);
            let scale = if normalize_rows {
                let sum: f64 = row.iter().sum();
                if sum <= 0.0 {
                    return Err(Error::contract(format!(
                        "row {i} of the similarity matrix has sum {sum}"
                    )));
                }
                sum
            } else {
                1.0
            };
            let mut g = models[i].clone();
            for (j, &sij) in row.iter().enumerate() {
                if sij != 0.0 {
                    g.axpy(-sij / scale, &models[j]);
                }
            }
            Ok(g)
        })
        .collect()
}

/// Exact gradient of [`regularizer`] for frozen similarities:
/// `2 Σ_j (s_ij + s_ji)(w_i − w_j)`.
pub fn regularizer_exact_grad(models: &[ParamVector], s: &SimilarityMatrix) -> Result<Vec<ParamVector>> {
    s.check_models(models)?;
    let n = s.n();
    Ok((0..n)
        .map(|i| {
            let mut g = ParamVector::zeros(models[i].len());
            for j in 0..n {
                if j == i {
                    continue;
                }
                let c = 2.0 * (s.get(i, j) + s.get(j, i));
                for ((gk, wi), wj) in g.iter_mut().zip(models[i].iter()).zip(models[j].iter()) {
                    *gk += c * (wi - wj);
                }
            }
            g
        })
        .collect())
}

/// Gradient-step form of the server update: `U = W − α ∇R(W)` using the
/// row-normalised version of `s`. With `alpha = 1` and `s` thresholded this
/// reproduces [`attention_aggregate`].
pub fn gradient_step_intermediates(
    models: &[ParamVector],
    s: &SimilarityMatrix,
    alpha: f64,
) -> Result<Vec<ParamVector>> {
    let grads = regularizer_grad(models, s, true)?;
    Ok(models
        .iter()
        .zip(grads)
        .map(|(w, g)| {
            let mut u = w.clone();
            u.axpy(-alpha, &g);
            u
        })
        .collect())
}
