//! Round-based federated training: FedACS, FedAvg, a FedAMP-style variant and
//! local-only training.
//!
//! A round samples participants, lets the server build each participant's
//! starting point, then runs local SGD on every participant independently.
//! Clients outside the round keep their models bit-for-bit. Random streams are
//! keyed by `(seed, round, client)` so serial and parallel execution agree.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::model::{self, ModelSpec, ParamVector};
use crate::rng::{stream, SimRng, STREAM_LOCAL_SGD, STREAM_PARTICIPANTS};
use crate::similarity::{
    attention_aggregate, gradient_step_intermediates, quantile_threshold, similarity_matrix, AttentionWeights,
};

/// A client's training objective `F_i`.
pub trait LocalObjective: Sync {
    fn dim(&self) -> usize;

    /// Number of training rows; mini-batches index into `0..train_len()`.
    fn train_len(&self) -> usize;

    /// Loss and gradient on the given rows, or on all rows for `None`.
    fn loss_and_gradient(&self, params: &[f64], rows: Option<&[usize]>) -> Result<(f64, ParamVector)>;

    fn loss(&self, params: &[f64], rows: Option<&[usize]>) -> Result<f64> {
        self.loss_and_gradient(params, rows).map(|(l, _)| l)
    }

    /// Held-out accuracy, if the objective has a test split.
    fn test_accuracy(&self, _params: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// Softmax cross-entropy of a classifier on one client's shard.
#[derive(Clone, Copy, Debug)]
pub struct ShardObjective<'a> {
    pub spec: ModelSpec,
    pub shard: &'a ClientShard,
}

impl<'a> ShardObjective<'a> {
    pub fn new(spec: ModelSpec, shard: &'a ClientShard) -> Self {
        ShardObjective { spec, shard }
    }
}

impl LocalObjective for ShardObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_dim()
    }

    fn train_len(&self) -> usize {
        self.shard.train.len()
    }

    fn loss_and_gradient(&self, params: &[f64], rows: Option<&[usize]>) -> Result<(f64, ParamVector)> {
        match rows {
            None => model::loss_and_gradient(&self.spec, params, &self.shard.train),
            Some(r) => model::loss_and_gradient(&self.spec, params, &self.shard.train.select(r)),
        }
    }

    fn loss(&self, params: &[f64], rows: Option<&[usize]>) -> Result<f64> {
        match rows {
            None => model::forward_loss(&self.spec, params, &self.shard.train),
            Some(r) => model::forward_loss(&self.spec, params, &self.shard.train.select(r)),
        }
    }

    fn test_accuracy(&self, params: &[f64]) -> Result<Option<f64>> {
        model::accuracy(&self.spec, params, &self.shard.test).map(Some)
    }
}

/// `½‖w − c‖²`, independent of any data.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    pub center: ParamVector,
}

impl LocalObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn train_len(&self) -> usize {
        1
    }

    fn loss_and_gradient(&self, params: &[f64], _rows: Option<&[usize]>) -> Result<(f64, ParamVector)> {
        if params.len() != self.center.len() {
            return Err(Error::contract("quadratic objective dimension mismatch"));
        }
        let g: Vec<f64> = params.iter().zip(self.center.iter()).map(|(w, c)| w - c).collect();
        let loss = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
        Ok((loss, ParamVector::new(g)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fedacs,
    Fedavg,
    Fedamp,
    Local,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fedacs => "fedacs",
            Algorithm::Fedavg => "fedavg",
            Algorithm::Fedamp => "fedamp",
            Algorithm::Local => "local",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the server turns `W^{k-1}` into the intermediates `U^k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntermediateRule {
    /// Normalised attention average over neighbours above the threshold.
    #[default]
    Attention,
    /// `U = W − α_k ∇R(W)` with the same thresholded, row-normalised
    /// similarities; equal to `Attention` when `α_k = 1`.
    GradientStep,
}

/// Per-round step size for the server (α) or client (β) update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `α_k = λ/√K`, `β_k = 1/√K`.
    ConstantTheorem,
    /// `α_k = a/(k + b)`, `β_k = α_k/λ`.
    Diminishing {
        a: f64,
        b: f64,
    },
    Fixed {
        value: f64,
    },
}

impl StepSchedule {
    /// `k` is the 1-based round index, `rounds` the horizon `K`.
    pub fn alpha(&self, k: usize, rounds: usize, lambda: f64) -> f64 {
        match *self {
            StepSchedule::ConstantTheorem => lambda / (rounds.max(1) as f64).sqrt(),
            StepSchedule::Diminishing { a, b } => a / (k as f64 + b),
            StepSchedule::Fixed { value } => value,
        }
    }

    pub fn beta(&self, k: usize, rounds: usize, lambda: f64) -> f64 {
        match *self {
            StepSchedule::ConstantTheorem => 1.0 / (rounds.max(1) as f64).sqrt(),
            StepSchedule::Diminishing { a, b } => a / ((k as f64 + b) * lambda),
            StepSchedule::Fixed { value } => value,
        }
    }

    pub fn validate(&self, field: &str, lambda: f64) -> Result<()> {
        let bad = |msg: &str| Err(Error::validation(field, msg));
        match *self {
            StepSchedule::ConstantTheorem => {
                if lambda.is_nan() || lambda <= 0.0 {
                    return bad("constant_theorem needs a positive lambda");
                }
            }
            StepSchedule::Diminishing { a, b } => {
                if !(a > 0.0 && a.is_finite()) {
                    return bad("diminishing needs a > 0");
                }
                if !(b >= 0.0 && b.is_finite()) {
                    return bad("diminishing needs b >= 0");
                }
                if lambda.is_nan() || lambda <= 0.0 {
                    return bad("diminishing needs a positive lambda");
                }
            }
            StepSchedule::Fixed { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return bad("fixed step must be a non-negative number");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub pick_ratio_p: f64,
    pub rounds: usize,
    pub local_steps: usize,
    pub batch_size: usize,
    pub participation_fraction: f64,
    pub alpha_schedule: StepSchedule,
    pub beta_schedule: StepSchedule,
    pub intermediate_rule: IntermediateRule,
    /// Replaces the quantile threshold with a constant δ.
    pub fixed_delta: Option<f64>,
    /// Set per run from the experiment seed list, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            algorithm: Algorithm::Fedacs,
            lambda: 1.0,
            pick_ratio_p: 0.5,
            rounds: 50,
            local_steps: 1,
            batch_size: 10,
            participation_fraction: 1.0,
            alpha_schedule: StepSchedule::ConstantTheorem,
            beta_schedule: StepSchedule::Fixed { value: 0.1 },
            intermediate_rule: IntermediateRule::Attention,
            fixed_delta: None,
            seed: 0,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation("algo.lambda", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pick_ratio_p) {
            return Err(Error::validation("algo.pick_ratio_p", "must lie in [0, 1]"));
        }
        if self.local_steps == 0 && self.algorithm != Algorithm::Fedamp {
            return Err(Error::validation(
                "algo.local_steps",
                "must be positive (only fedamp accepts 0)",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("algo.batch_size", "must be positive"));
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err(Error::validation("algo.participation_fraction", "must lie in (0, 1]"));
        }
        if let Some(d) = self.fixed_delta {
            if d.is_nan() {
                return Err(Error::validation("algo.fixed_delta", "must not be NaN"));
            }
        }
        self.alpha_schedule.validate("algo.alpha_schedule", self.lambda)?;
        self.beta_schedule.validate("algo.beta_schedule", self.lambda)?;
        Ok(())
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha_schedule.alpha(k, self.rounds, self.lambda)
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta_schedule.beta(k, self.rounds, self.lambda)
    }
}

/// Models `W^k` and intermediates `U^k` after round `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedState {
    pub round: usize,
    pub models: Vec<ParamVector>,
    pub intermediates: Vec<ParamVector>,
    pub participants: Vec<usize>,
    /// FedAvg's shared model; every client is evaluated with it when set.
    pub global: Option<ParamVector>,
}

impl FederatedState {
    /// Every client starts from the same `init`.
    pub fn new(init: ParamVector, n_clients: usize, algorithm: Algorithm) -> Result<Self> {
        if n_clients == 0 {
            return Err(Error::contract("federated state needs at least one client"));
        }
        Ok(FederatedState {
            round: 0,
            models: vec![init.clone(); n_clients],
            intermediates: vec![init.clone(); n_clients],
            participants: (0..n_clients).collect(),
            global: (algorithm == Algorithm::Fedavg).then_some(init),
        })
    }

    pub fn n_clients(&self) -> usize {
        self.models.len()
    }

    /// The model client `i` is evaluated with.
    pub fn personalized_model(&self, i: usize) -> &ParamVector {
        self.global.as_ref().unwrap_or(&self.models[i])
    }
}

/// A finished round with what the server did in it.
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub state: FederatedState,
    pub delta: Option<f64>,
    pub attention: Option<AttentionWeights>,
}

/// Uniform sample of `max(1, round(fraction · n))` distinct clients, sorted.
pub fn sample_participants(n: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    let count = ((fraction * n as f64).round() as usize).clamp(1, n.max(1));
    if count >= n {
        return (0..n).collect();
    }
    let mut rng = stream(seed, &[STREAM_PARTICIPANTS, round as u64]);
    let mut ids = index::sample(&mut rng, n, count).into_vec();
    ids.sort_unstable();
    ids
}

/// RNG driving client `client`'s batch order in round `round`.
pub fn local_rng(seed: u64, round: usize, client: usize) -> SimRng {
    stream(seed, &[STREAM_LOCAL_SGD, round as u64, client as u64])
}

/// Mini-batch row sets for `steps` SGD steps: each epoch is a fresh shuffle
/// of `0..n_train` cut into consecutive chunks of `batch_size` (the last chunk
/// of an epoch may be short). `None` marks a full-batch step.
pub fn minibatch_order(n_train: usize, batch_size: usize, steps: usize, rng: &mut SimRng) -> Vec<Option<Vec<usize>>> {
    if batch_size >= n_train {
        return vec![None; steps];
    }
    let mut out = Vec::with_capacity(steps);
    let mut perm: Vec<usize> = (0..n_train).collect();
    let mut pos = n_train;
    while out.len() < steps {
        if pos >= n_train {
            perm.shuffle(rng);
            pos = 0;
        }
        let end = (pos + batch_size).min(n_train);
        out.push(Some(perm[pos..end].to_vec()));
        pos = end;
    }
    out
}

/// Runs `local_steps` SGD steps with rate `beta` from `start`.
#[allow(clippy::too_many_arguments)]
pub fn local_update<O: LocalObjective + ?Sized>(
    objective: &O,
    start: &ParamVector,
    beta: f64,
    local_steps: usize,
    batch_size: usize,
    rng: &mut SimRng,
    round: usize,
    client: usize,
) -> Result<ParamVector> {
    if objective.train_len() == 0 {
        return Err(Error::contract(format!("client {client} has no training data")));
    }
    let diverged = |message: String| Error::Divergence { round, client, message };
    let mut w = start.clone();
    for (step, rows) in minibatch_order(objective.train_len(), batch_size, local_steps, rng)
        .into_iter()
        .enumerate()
    {
        let (loss, grad) = objective.loss_and_gradient(&w, rows.as_deref())?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(diverged(format!("non-finite loss or gradient at local step {step}")));
        }
        w.axpy(-beta, &grad);
        if !w.is_finite() {
            return Err(diverged(format!("non-finite parameters after local step {step}")));
        }
    }
    Ok(w)
}

fn train_participants<O: LocalObjective>(
    objectives: &[O],
    starts: &[(usize, ParamVector)],
    cfg: &AlgoConfig,
    round: usize,
) -> Result<Vec<ParamVector>> {
    let beta = cfg.beta(round);
    starts
        .par_iter()
        .map(|(client, u)| {
            let mut rng = local_rng(cfg.seed, round, *client);
            local_update(
                &objectives[*client],
                u,
                beta,
                cfg.local_steps,
                cfg.batch_size,
                &mut rng,
                round,
                *client,
            )
        })
        .collect()
}

fn check_inputs<O: LocalObjective>(state: &FederatedState, objectives: &[O]) -> Result<()> {
    if objectives.len() != state.n_clients() {
        return Err(Error::contract(format!(
            "{} objectives for {} clients",
            objectives.len(),
            state.n_clients()
        )));
    }
    if let Some((i, _)) = objectives
        .iter()
        .enumerate()
        .find(|(i, o)| o.dim() != state.models[*i].len())
    {
        return Err(Error::contract(format!("client {i} objective dimension mismatch")));
    }
    Ok(())
}

enum Threshold {
    Quantile(f64),
    Fixed(f64),
}

fn attention_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
    threshold: Threshold,
) -> Result<RoundOutcome> {
    check_inputs(state, objectives)?;
    let k = state.round + 1;
    let participants = sample_participants(state.n_clients(), cfg.participation_fraction, cfg.seed, k);
    let local: Vec<ParamVector> = participants.iter().map(|&i| state.models[i].clone()).collect();

    let s = similarity_matrix(&local).map_err(|e| match e {
        Error::DegenerateModel { client } => Error::DegenerateModel {
            client: participants[client],
        },
        other => other,
    })?;
    let (delta, pick) = match threshold {
        Threshold::Quantile(p) => (quantile_threshold(&s, p)?, Some(p)),
        Threshold::Fixed(d) => (d, None),
    };
    let (attended, mut weights) = attention_aggregate(&local, &s, delta)?;
    weights.pick_ratio_p = pick;
    let intermediates = match cfg.intermediate_rule {
        IntermediateRule::Attention => attended,
        IntermediateRule::GradientStep => gradient_step_intermediates(&local, &s.thresholded(delta), cfg.alpha(k))?,
    };

    let starts: Vec<(usize, ParamVector)> = participants.iter().copied().zip(intermediates).collect();
    let trained = if cfg.local_steps == 0 {
        starts.iter().map(|(_, u)| u.clone()).collect()
    } else {
        train_participants(objectives, &starts, cfg, k)?
    };

    let mut next = state.clone();
    next.round = k;
    for ((client, u), w) in starts.into_iter().zip(trained) {
        next.intermediates[client] = u;
        next.models[client] = w;
    }
    next.participants = participants;
    Ok(RoundOutcome {
        state: next,
        delta: Some(delta),
        attention: Some(weights),
    })
}

/// One FedACS round: similarity over participants, quantile threshold
/// (or `cfg.fixed_delta`), attention aggregation, then local SGD from `u_i`.
pub fn fedacs_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
) -> Result<RoundOutcome> {
    let threshold = match cfg.fixed_delta {
        Some(d) => Threshold::Fixed(d),
        None => Threshold::Quantile(cfg.pick_ratio_p),
    };
    attention_round(state, cfg, objectives, threshold)
}

/// FedACS without thresholding: every positively similar participant is a
/// neighbour. With `local_steps = 0` the round ends at `W^k = U^k`.
pub fn fedamp_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
) -> Result<RoundOutcome> {
    attention_round(state, cfg, objectives, Threshold::Fixed(f64::NEG_INFINITY))
}

/// Participants train their own models; the server does nothing.
pub fn local_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
) -> Result<RoundOutcome> {
    check_inputs(state, objectives)?;
    let k = state.round + 1;
    let participants = sample_participants(state.n_clients(), cfg.participation_fraction, cfg.seed, k);
    let starts: Vec<(usize, ParamVector)> = participants.iter().map(|&i| (i, state.models[i].clone())).collect();
    let trained = train_participants(objectives, &starts, cfg, k)?;
    let mut next = state.clone();
    next.round = k;
    for ((client, u), w) in starts.into_iter().zip(trained) {
        next.intermediates[client] = u;
        next.models[client] = w;
    }
    next.participants = participants;
    Ok(RoundOutcome {
        state: next,
        delta: None,
        attention: None,
    })
}

/// Participants train from the global model; the server replaces it with the
/// train-size-weighted mean of what comes back.
pub fn fedavg_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
) -> Result<RoundOutcome> {
    check_inputs(state, objectives)?;
    let k = state.round + 1;
    let global = state.global.clone().unwrap_or_else(|| state.models[0].clone());
    let participants = sample_participants(state.n_clients(), cfg.participation_fraction, cfg.seed, k);
    let starts: Vec<(usize, ParamVector)> = participants.iter().map(|&i| (i, global.clone())).collect();
    let trained = train_participants(objectives, &starts, cfg, k)?;

    let total: f64 = participants.iter().map(|&i| objectives[i].train_len() as f64).sum();
    let mut avg = ParamVector::zeros(global.len());
    for (&client, w) in participants.iter().zip(&trained) {
        avg.axpy(objectives[client].train_len() as f64 / total, w);
    }

    let mut next = state.clone();
    next.round = k;
    for ((client, u), w) in starts.into_iter().zip(trained) {
        next.intermediates[client] = u;
        next.models[client] = w;
    }
    next.participants = participants;
    next.global = Some(avg);
    Ok(RoundOutcome {
        state: next,
        delta: None,
        attention: None,
    })
}

pub fn run_round<O: LocalObjective>(
    state: &FederatedState,
    cfg: &AlgoConfig,
    objectives: &[O],
) -> Result<RoundOutcome> {
    match cfg.algorithm {
        Algorithm::Fedacs => fedacs_round(state, cfg, objectives),
        Algorithm::Fedavg => fedavg_round(state, cfg, objectives),
        Algorithm::Fedamp => fedamp_round(state, cfg, objectives),
        Algorithm::Local => local_round(state, cfg, objectives),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: &[f64]) -> QuadraticObjective {
        QuadraticObjective {
            center: ParamVector::new(c.to_vec()),
        }
    }

    fn cfg(algorithm: Algorithm, beta: f64) -> AlgoConfig {
        AlgoConfig {
            algorithm,
            beta_schedule: StepSchedule::Fixed { value: beta },
            local_steps: 1,
            ..Default::default()
        }
    }

    #[test]
    fn participants() {
        assert_eq!(sample_participants(7, 1.0, 3, 1), (0..7).collect::<Vec<_>>());
        let p = sample_participants(500, 0.1, 3, 4);
        assert_eq!(p.len(), 50);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p, sample_participants(500, 0.1, 3, 4));
        assert_ne!(p, sample_participants(500, 0.1, 3, 5));
        assert_eq!(sample_participants(10, 0.01, 0, 1).len(), 1);
    }

    #[test]
    fn minibatches_cover_each_epoch() {
        let mut rng = local_rng(1, 1, 0);
        let order = minibatch_order(10, 4, 6, &mut rng);
        let sizes: Vec<usize> = order.iter().map(|b| b.as_ref().unwrap().len()).collect();
        assert_eq!(sizes, vec![4, 4, 2, 4, 4, 2]);
        let mut epoch: Vec<usize> = order[..3].iter().flat_map(|b| b.clone().unwrap()).collect();
        epoch.sort_unstable();
        assert_eq!(epoch, (0..10).collect::<Vec<_>>());
        let mut rng = local_rng(1, 1, 0);
        assert_eq!(minibatch_order(10, 10, 3, &mut rng), vec![None, None, None]);
    }

    #[test]
    fn local_update_quadratic_step() {
        let obj = quad(&[1.0, -2.0]);
        let u = ParamVector::new(vec![3.0, 0.5]);
        let mut rng = local_rng(0, 1, 0);
        let w = local_update(&obj, &u, 0.25, 1, 1, &mut rng, 1, 0).unwrap();
        let expected = [3.0 - 0.25 * 2.0, 0.5 - 0.25 * 2.5];
        assert!(w.max_abs_diff(&expected) < 1e-15);
        let same = local_update(&obj, &u, 0.0, 5, 1, &mut rng, 1, 0).unwrap();
        assert_eq!(same, u);
    }

    #[test]
    fn divergence_carries_context() {
        let obj = quad(&[1.0]);
        let u = ParamVector::new(vec![1e300]);
        let mut rng = local_rng(0, 1, 0);
        let err = local_update(&obj, &u, -1e10, 3, 1, &mut rng, 7, 4).unwrap_err();
        assert!(matches!(
            err,
            Error::Divergence {
                round: 7,
                client: 4,
                ..
            }
        ));
    }

    #[test]
    fn fedavg_quadratic_average() {
        let objs = vec![quad(&[1.0, 0.0]), quad(&[3.0, 4.0])];
        let w0 = ParamVector::new(vec![0.5, 0.5]);
        let state = FederatedState::new(w0.clone(), 2, Algorithm::Fedavg).unwrap();
        let beta = 0.3;
        let out = fedavg_round(&state, &cfg(Algorithm::Fedavg, beta), &objs).unwrap();
        let mean_c = [2.0, 2.0];
        let expected: Vec<f64> = (0..2).map(|j| w0[j] - beta * (w0[j] - mean_c[j])).collect();
        assert!(out.state.global.unwrap().max_abs_diff(&expected) < 1e-15);

        let still = fedavg_round(&state, &cfg(Algorithm::Fedavg, 0.0), &objs).unwrap();
        assert_eq!(still.state.global.unwrap(), w0);
    }

    #[test]
    fn fedavg_single_client_is_sgd() {
        let objs = vec![quad(&[2.0])];
        let state = FederatedState::new(ParamVector::new(vec![0.0]), 1, Algorithm::Fedavg).unwrap();
        let out = fedavg_round(&state, &cfg(Algorithm::Fedavg, 0.5), &objs).unwrap();
        assert_eq!(out.state.global.unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn local_round_quadratic_and_zero_step() {
        let objs = vec![quad(&[2.0, 0.0]), quad(&[0.0, 2.0])];
        let state = FederatedState::new(ParamVector::new(vec![1.0, 1.0]), 2, Algorithm::Local).unwrap();
        let out = local_round(&state, &cfg(Algorithm::Local, 0.5), &objs).unwrap();
        assert_eq!(out.state.models[0].as_slice(), &[1.5, 0.5]);
        assert_eq!(out.state.models[1].as_slice(), &[0.5, 1.5]);
        let same = local_round(&state, &cfg(Algorithm::Local, 0.0), &objs).unwrap();
        assert_eq!(same.state.models, state.models);
    }

    #[test]
    fn fedamp_zero_steps_returns_intermediates() {
        let objs = vec![quad(&[1.0, 0.0]), quad(&[2.0, 2.0]), quad(&[0.0, 1.0])];
        let mut state = FederatedState::new(ParamVector::zeros(2), 3, Algorithm::Fedamp).unwrap();
        state.models = objs.iter().map(|o| o.center.clone()).collect();
        let mut c = cfg(Algorithm::Fedamp, 0.1);
        c.local_steps = 0;
        let out = fedamp_round(&state, &c, &objs).unwrap();
        assert_eq!(out.state.models, out.state.intermediates);
        assert_eq!(out.delta, Some(f64::NEG_INFINITY));
    }

    #[test]
    fn non_participants_untouched() {
        let objs: Vec<QuadraticObjective> = (0..10).map(|i| quad(&[i as f64, 1.0])).collect();
        for algorithm in [
            Algorithm::Fedacs,
            Algorithm::Fedavg,
            Algorithm::Fedamp,
            Algorithm::Local,
        ] {
            let mut state = FederatedState::new(ParamVector::new(vec![1.0, 1.0]), 10, algorithm).unwrap();
            let mut c = cfg(algorithm, 0.2);
            c.participation_fraction = 0.3;
            for _ in 0..3 {
                let out = run_round(&state, &c, &objs).unwrap();
                for i in 0..10 {
                    if !out.state.participants.contains(&i) {
                        assert_eq!(out.state.models[i], state.models[i]);
                        assert_eq!(out.state.intermediates[i], state.intermediates[i]);
                    }
                }
                assert_eq!(out.state.participants.len(), 3);
                state = out.state;
            }
        }
    }

    #[test]
    fn schedules() {
        let s = StepSchedule::ConstantTheorem;
        assert!((s.alpha(3, 100, 1.0) - 0.1).abs() < 1e-15);
        assert!((s.beta(3, 100, 1.0) - 0.1).abs() < 1e-15);
        let d = StepSchedule::Diminishing { a: 2.0, b: 1.0 };
        assert_eq!(d.alpha(3, 10, 4.0), 0.5);
        assert_eq!(d.beta(3, 10, 4.0), 0.125);
        assert!(StepSchedule::Diminishing { a: 0.0, b: 1.0 }.validate("x", 1.0).is_err());
        assert!(StepSchedule::Fixed { value: -1.0 }.validate("x", 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AlgoConfig::default().validate().is_ok());
        let mut c = AlgoConfig {
            local_steps: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.algorithm = Algorithm::Fedamp;
        assert!(c.validate().is_ok());
        c.pick_ratio_p = 1.5;
        assert!(c.validate().is_err());
    }
}
