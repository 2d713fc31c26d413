//! Objective and stationarity instrumentation.
//!
//! Everything here evaluates full-batch quantities on frozen snapshots: the
//! personalised objective `F_λ(W) = Σ F_i(w_i) + λ R(W)`, its gradient norm,
//! a running minimum of the squared norm, step-size schedules, a log-log rate
//! fit and secant estimates of the gradient bounds along a trajectory.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federated::{
    run_round, AlgoConfig, Algorithm, FederatedState, LocalObjective, QuadraticObjective, StepSchedule,
};
use crate::model::ParamVector;
use crate::rng::{stream, STREAM_INIT, STREAM_TESTBED};
use crate::similarity::{
    quantile_threshold, regularizer, regularizer_exact_grad, regularizer_grad, similarity_matrix, SimilarityMatrix,
};

/// Which `∇R` the gradient norm uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    /// Column formula `w_i − Σ_j s_ij w_j`, optionally with row-normalised `s`.
    Stated { normalize_rows: bool },
    /// True derivative of `R` with `s` frozen.
    Exact,
}

/// `Σ_i F_i(w_i) + λ R(W)` on full training sets with `s` held constant.
pub fn personalized_objective<O: LocalObjective>(
    models: &[ParamVector],
    objectives: &[O],
    lambda: f64,
    s: &SimilarityMatrix,
) -> Result<f64> {
    check_pairing(models, objectives)?;
    let losses: Vec<f64> = models
        .par_iter()
        .zip(objectives.par_iter())
        .map(|(w, o)| o.loss(w, None))
        .collect::<Result<_>>()?;
    let f: f64 = losses.iter().sum();
    if lambda == 0.0 {
        return Ok(f);
    }
    Ok(f + lambda * regularizer(models, s)?)
}

/// Per-client blocks of `∇F_λ(W)`.
pub fn objective_gradients<O: LocalObjective>(
    models: &[ParamVector],
    objectives: &[O],
    lambda: f64,
    s: &SimilarityMatrix,
    form: GradientForm,
) -> Result<Vec<ParamVector>> {
    let local = local_gradients(models, objectives)?;
    let reg = match form {
        GradientForm::Stated { normalize_rows } => regularizer_grad(models, s, normalize_rows)?,
        GradientForm::Exact => regularizer_exact_grad(models, s)?,
    };
    Ok(local
        .into_iter()
        .zip(reg)
        .map(|(mut g, r)| {
            g.axpy(lambda, &r);
            g
        })
        .collect())
}

/// Frobenius norm of the stacked gradient blocks (not squared).
pub fn objective_grad_norm<O: LocalObjective>(
    models: &[ParamVector],
    objectives: &[O],
    lambda: f64,
    s: &SimilarityMatrix,
    form: GradientForm,
) -> Result<f64> {
    let grads = objective_gradients(models, objectives, lambda, s, form)?;
    Ok(stacked_norm_sq(&grads).sqrt())
}

fn local_gradients<O: LocalObjective>(models: &[ParamVector], objectives: &[O]) -> Result<Vec<ParamVector>> {
    check_pairing(models, objectives)?;
    models
        .par_iter()
        .zip(objectives.par_iter())
        .map(|(w, o)| o.loss_and_gradient(w, None).map(|(_, g)| g))
        .collect()
}

fn check_pairing<O: LocalObjective>(models: &[ParamVector], objectives: &[O]) -> Result<()> {
    if models.len() != objectives.len() {
        return Err(Error::contract(format!(
            "{} models for {} objectives",
            models.len(),
            objectives.len()
        )));
    }
    Ok(())
}

fn stacked_norm_sq(blocks: &[ParamVector]) -> f64 {
    blocks.iter().map(|b| b.norm_sq()).sum()
}

/// Central differences `(f(w + h e_j) − f(w − h e_j)) / 2h` per coordinate.
pub fn finite_difference_grad<F>(f: F, w: &[f64], h: f64) -> Result<ParamVector>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let mut probe = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let plus = f(&probe)?;
        probe[j] = orig - h;
        let minus = f(&probe)?;
        probe[j] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!("non-finite evaluation at coordinate {j}")));
        }
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(ParamVector::new(out))
}

/// Per-round `(α_k, β_k)` for `k = 1..=rounds`.
pub fn make_schedule(schedule: &StepSchedule, rounds: usize, lambda: f64) -> Result<Vec<(f64, f64)>> {
    if rounds == 0 {
        return Err(Error::contract("schedule horizon must be at least 1"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::contract("schedule needs a positive lambda"));
    }
    schedule
        .validate("schedule", lambda)
        .map_err(|e| Error::contract(e.to_string()))?;
    Ok((1..=rounds)
        .map(|k| (schedule.alpha(k, rounds, lambda), schedule.beta(k, rounds, lambda)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub objective: f64,
    pub grad_norm_sq: f64,
    pub running_min: f64,
}

/// Per-round objective and squared gradient norm with their running minimum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationarityTrace {
    pub records: Vec<TraceRecord>,
}

impl StationarityTrace {
    pub fn push(&mut self, round: usize, objective: f64, grad_norm_sq: f64) -> Result<()> {
        if !objective.is_finite() || !grad_norm_sq.is_finite() {
            return Err(Error::Divergence {
                round,
                client: 0,
                message: "non-finite objective or gradient norm".into(),
            });
        }
        let running_min = self
            .records
            .last()
            .map_or(grad_norm_sq, |r| r.running_min.min(grad_norm_sq));
        self.records.push(TraceRecord {
            round,
            objective,
            grad_norm_sq,
            running_min,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Running minimum over rounds `0..=k`.
    pub fn running_min_at(&self, k: usize) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.round <= k)
            .last()
            .map(|r| r.running_min)
    }

    /// Minimum `grad_norm_sq` over the first and last tenth of rounds `1..=K`.
    pub fn decile_mins(&self) -> Option<(f64, f64)> {
        let rounds: Vec<&TraceRecord> = self.records.iter().filter(|r| r.round >= 1).collect();
        let tenth = rounds.len() / 10;
        if tenth == 0 {
            return None;
        }
        let min = |rs: &[&TraceRecord]| rs.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min);
        Some((min(&rounds[..tenth]), min(&rounds[rounds.len() - tenth..])))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares slope of `log(running_min)` against `log(K)` at the given
/// checkpoints of one trace.
pub fn rate_fit(trace: &StationarityTrace, checkpoints: &[usize]) -> Result<RateFit> {
    let points = checkpoints
        .iter()
        .map(|&k| {
            trace
                .running_min_at(k)
                .filter(|_| trace.records.last().is_some_and(|r| r.round >= k))
                .map(|v| (k as f64, v))
                .ok_or_else(|| Error::contract(format!("trace does not reach checkpoint {k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    log_log_fit(&points)
}

/// Least-squares line through `(log x, log y)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::contract("rate fit needs at least 2 checkpoints"));
    }
    if !points.iter().all(|&(x, y)| x > 0.0 && y > 0.0) {
        return Err(Error::contract("rate fit needs positive checkpoints and values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::contract("rate fit needs distinct checkpoints"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (sse / m).sqrt(),
    })
}

/// Empirical bound constants along a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionProbe {
    /// Largest `‖∇F(W^k)‖` seen; an estimate of `B`.
    pub max_grad_f: f64,
    /// Largest `‖∇R(W^k)‖` seen.
    pub max_grad_r: f64,
    /// Whether `max_grad_r ≤ max_grad_f / λ`.
    pub r_within_bound: bool,
    /// Largest secant ratio of `∇F` between consecutive distinct iterates.
    pub lipschitz_f: Option<f64>,
    pub lipschitz_r: Option<f64>,
    pub snapshots: usize,
    #[serde(skip)]
    last: Option<(Vec<ParamVector>, Vec<ParamVector>, Vec<ParamVector>)>,
    #[serde(skip)]
    lambda: f64,
}

impl AssumptionProbe {
    pub fn new(lambda: f64) -> Self {
        AssumptionProbe {
            lambda,
            r_within_bound: true,
            ..Default::default()
        }
    }

    /// Records one iterate with its `∇F` and `∇R` blocks.
    pub fn observe(&mut self, models: &[ParamVector], grad_f: Vec<ParamVector>, grad_r: Vec<ParamVector>) {
        let nf = stacked_norm_sq(&grad_f).sqrt();
        let nr = stacked_norm_sq(&grad_r).sqrt();
        self.max_grad_f = self.max_grad_f.max(nf);
        self.max_grad_r = self.max_grad_r.max(nr);
        self.r_within_bound = self.max_grad_r <= self.max_grad_f / self.lambda;
        if let Some((prev_w, prev_f, prev_r)) = &self.last {
            let dw = stacked_diff_norm(models, prev_w);
            if dw > 0.0 {
                let lf = stacked_diff_norm(&grad_f, prev_f) / dw;
                let lr = stacked_diff_norm(&grad_r, prev_r) / dw;
                self.lipschitz_f = Some(self.lipschitz_f.map_or(lf, |v| v.max(lf)));
                self.lipschitz_r = Some(self.lipschitz_r.map_or(lr, |v| v.max(lr)));
            }
        }
        self.snapshots += 1;
        self.last = Some((models.to_vec(), grad_f, grad_r));
    }
}

fn stacked_diff_norm(a: &[ParamVector], b: &[ParamVector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.distance_sq(y)).sum::<f64>().sqrt()
}

/// Probe over a recorded trajectory of `(models, similarities)` snapshots.
/// `∇R` uses the row-normalised column formula.
pub fn assumption_probe<O: LocalObjective>(
    trajectory: &[(Vec<ParamVector>, SimilarityMatrix)],
    objectives: &[O],
    lambda: f64,
) -> Result<AssumptionProbe> {
    if trajectory.len() < 2 {
        return Err(Error::contract("assumption probe needs at least 2 snapshots"));
    }
    let mut probe = AssumptionProbe::new(lambda);
    for (models, s) in trajectory {
        let gf = local_gradients(models, objectives)?;
        let gr = regularizer_grad(models, s, true)?;
        probe.observe(models, gf, gr);
    }
    Ok(probe)
}

/// The thresholded similarities the server would use on `models`.
pub fn diagnostic_similarity(models: &[ParamVector], cfg: &AlgoConfig) -> Result<SimilarityMatrix> {
    let s = similarity_matrix(models)?;
    let delta = match cfg.algorithm {
        Algorithm::Fedacs => match cfg.fixed_delta {
            Some(d) => d,
            None => quantile_threshold(&s, cfg.pick_ratio_p)?,
        },
        Algorithm::Fedamp => f64::NEG_INFINITY,
        Algorithm::Fedavg | Algorithm::Local => f64::INFINITY,
    };
    Ok(s.thresholded(delta))
}

/// Objective value, `∇F` blocks and stated, row-normalised `∇R` blocks at one
/// snapshot.
pub struct Snapshot {
    pub objective: f64,
    pub grad_f: Vec<ParamVector>,
    pub grad_r: Vec<ParamVector>,
}

impl Snapshot {
    pub fn evaluate<O: LocalObjective>(models: &[ParamVector], objectives: &[O], cfg: &AlgoConfig) -> Result<Self> {
        let s = diagnostic_similarity(models, cfg)?;
        Ok(Snapshot {
            objective: personalized_objective(models, objectives, cfg.lambda, &s)?,
            grad_f: local_gradients(models, objectives)?,
            grad_r: regularizer_grad(models, &s, true)?,
        })
    }

    pub fn grad_norm_sq(&self, lambda: f64) -> f64 {
        self.grad_f
            .iter()
            .zip(&self.grad_r)
            .map(|(f, r)| {
                f.iter()
                    .zip(r.iter())
                    .map(|(a, b)| (a + lambda * b).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Models each client is evaluated with (FedAvg's global model when present).
pub fn personalized_models(state: &FederatedState) -> Vec<ParamVector> {
    (0..state.n_clients())
        .map(|i| state.personalized_model(i).clone())
        .collect()
}

#[derive(Clone, Debug)]
pub struct StationarityRun {
    pub trace: StationarityTrace,
    pub probe: AssumptionProbe,
    pub state: FederatedState,
}

/// Runs `cfg.rounds` rounds from a shared `init`, recording `F_λ` and
/// `‖∇F_λ‖²` at `W^0, …, W^K`.
pub fn run_stationarity<O: LocalObjective>(
    objectives: &[O],
    init: ParamVector,
    cfg: &AlgoConfig,
) -> Result<StationarityRun> {
    cfg.validate()?;
    let mut state = FederatedState::new(init, objectives.len(), cfg.algorithm)?;
    let mut trace = StationarityTrace::default();
    let mut probe = AssumptionProbe::new(cfg.lambda);
    for k in 0..=cfg.rounds {
        if k > 0 {
            state = run_round(&state, cfg, objectives)?.state;
        }
        let models = personalized_models(&state);
        let snap = Snapshot::evaluate(&models, objectives, cfg)?;
        trace.push(k, snap.objective, snap.grad_norm_sq(cfg.lambda))?;
        probe.observe(&models, snap.grad_f, snap.grad_r);
    }
    Ok(StationarityRun { trace, probe, state })
}

/// Running minimum reached by a horizon-`rounds` run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub rounds: usize,
    pub running_min: f64,
}

#[derive(Clone, Debug)]
pub struct StationarityStudy {
    pub horizons: Vec<HorizonResult>,
    /// `None` when fewer than two horizons have a positive running minimum.
    pub fit: Option<RateFit>,
    /// Trace of the longest run.
    pub trace: StationarityTrace,
    pub probe: AssumptionProbe,
}

/// Running minima at each checkpoint horizon and their log-log slope.
///
/// When either schedule depends on the horizon (`constant_theorem`) every
/// checkpoint is a separate run of that many rounds. Otherwise one run of
/// `cfg.rounds` is read at each checkpoint it reaches.
pub fn stationarity_study<O: LocalObjective>(
    objectives: &[O],
    init: &ParamVector,
    cfg: &AlgoConfig,
    checkpoints: &[usize],
) -> Result<StationarityStudy> {
    let horizon_bound = |s: &StepSchedule| matches!(s, StepSchedule::ConstantTheorem);
    let per_horizon = horizon_bound(&cfg.alpha_schedule) || horizon_bound(&cfg.beta_schedule);
    let (horizons, longest) = if per_horizon {
        let runs: Vec<StationarityRun> = checkpoints
            .par_iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.rounds = k;
                run_stationarity(objectives, init.clone(), &c)
            })
            .collect::<Result<_>>()?;
        let horizons: Vec<HorizonResult> = checkpoints
            .iter()
            .zip(&runs)
            .map(|(&rounds, run)| HorizonResult {
                rounds,
                running_min: run.trace.records.last().map_or(f64::NAN, |r| r.running_min),
            })
            .collect();
        let longest = runs
            .into_iter()
            .zip(checkpoints)
            .max_by_key(|(_, &k)| k)
            .map(|(r, _)| r)
            .ok_or_else(|| Error::contract("no checkpoints"))?;
        (horizons, longest)
    } else {
        let run = run_stationarity(objectives, init.clone(), cfg)?;
        let horizons = checkpoints
            .iter()
            .filter(|&&k| k <= cfg.rounds)
            .filter_map(|&rounds| {
                run.trace
                    .running_min_at(rounds)
                    .map(|running_min| HorizonResult { rounds, running_min })
            })
            .collect();
        (horizons, run)
    };
    let points: Vec<(f64, f64)> = horizons
        .iter()
        .filter(|h| h.running_min > 0.0)
        .map(|h| (h.rounds as f64, h.running_min))
        .collect();
    let fit = if points.len() >= 2 {
        Some(log_log_fit(&points)?)
    } else {
        None
    };
    Ok(StationarityStudy {
        horizons,
        fit,
        trace: longest.trace,
        probe: longest.probe,
    })
}

/// `n_clients` quadratic objectives `½‖w − c_i‖²` whose centres sit around
/// `n_groups` random directions; client `i` belongs to group `i % n_groups`.
pub fn quadratic_testbed(
    n_clients: usize,
    dim: usize,
    n_groups: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<QuadraticObjective>> {
    if n_clients == 0 || dim == 0 || n_groups == 0 {
        return Err(Error::contract("quadratic testbed needs positive sizes"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::contract("spread must be non-negative"));
    }
    let mut rng = stream(seed, &[STREAM_TESTBED]);
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let groups: Vec<Vec<f64>> = (0..n_groups).map(|_| gauss(dim)).collect();
    Ok((0..n_clients)
        .map(|i| {
            let noise = gauss(dim);
            let center = groups[i % n_groups]
                .iter()
                .zip(noise)
                .map(|(g, z)| g + spread * z)
                .collect();
            QuadraticObjective {
                center: ParamVector::new(center),
            }
        })
        .collect())
}

/// Shared Gaussian starting point for testbed runs.
pub fn testbed_init(dim: usize, seed: u64) -> ParamVector {
    let mut rng = stream(seed, &[STREAM_INIT]);
    ParamVector::new((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}
