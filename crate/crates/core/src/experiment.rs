//! Seeded end-to-end runs: data, partition, shared initialisation, `K` rounds,
//! per-round evaluation and the cross-seed summary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::data::{self, ClientShard, PartitionScheme};
use crate::diagnostics::{personalized_models, AssumptionProbe, Snapshot};
use crate::error::{Error, Result};
use crate::federated::{run_round, AlgoConfig, Algorithm, FederatedState, ShardObjective};
use crate::model::{ModelSpec, ParamVector};
use crate::rng::{stream, STREAM_INIT};
use crate::similarity::AttentionWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub delta: Option<f64>,
    pub participants: usize,
    pub objective: Option<f64>,
    pub grad_norm_sq: Option<f64>,
}

/// Server weights of one round, indexed by position in `participants`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub round: usize,
    pub participants: Vec<usize>,
    pub weights: AttentionWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub algorithm: Algorithm,
    /// `K + 1` records, round 0 first.
    pub records: Vec<RoundRecord>,
    pub attention: Vec<AttentionRecord>,
    pub probe: Option<AssumptionProbe>,
}

impl SeedRun {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.mean_test_accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub final_accuracies: Vec<f64>,
    pub mean_final_accuracy: f64,
    /// Population standard deviation across seeds.
    pub std_final_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub algorithm: Algorithm,
    pub runs: Vec<SeedRun>,
    pub summary: AlgorithmSummary,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A run's clients: the model spec, their shards and the shared initial model.
#[derive(Clone, Debug)]
pub struct ClientSetup {
    pub spec: ModelSpec,
    pub num_classes: usize,
    pub shards: Vec<ClientShard>,
    pub init: ParamVector,
}

/// Builds or loads the dataset, partitions it with `seed` and draws the
/// shared initial model.
pub fn prepare_clients(cfg: &ExperimentConfig, seed: u64) -> Result<ClientSetup> {
    let mut label_groups = 1;
    let dataset = match &cfg.dataset {
        DatasetConfig::Synthetic {
            num_classes,
            input_dim,
            samples_per_class,
            separation,
            noise_sigma,
            label_shift_groups,
        } => {
            label_groups = *label_shift_groups;
            data::make_synthetic_clusters(
                *num_classes,
                *input_dim,
                *samples_per_class,
                *separation,
                *noise_sigma,
                seed,
            )?
        }
        DatasetConfig::Idx {
            images,
            labels,
            num_classes,
        } => data::load_idx(images, labels, *num_classes)?,
        DatasetConfig::Csv {
            path,
            num_classes,
            has_header,
        } => data::load_csv(path, *num_classes, *has_header)?,
    };
    if cfg.partition.scheme == PartitionScheme::Pathological && cfg.partition.classes_per_client > dataset.num_classes {
        return Err(Error::validation(
            "partition.classes_per_client",
            format!("exceeds the {} classes of the dataset", dataset.num_classes),
        ));
    }
    let mut pcfg = cfg.partition.clone();
    pcfg.seed = seed;
    let mut shards = data::partition(&dataset, &pcfg)?;
    data::relabel_client_groups(&mut shards, label_groups, dataset.num_classes);

    let spec = cfg.model.spec(dataset.input_dim(), dataset.num_classes);
    spec.validate()?;
    let init = spec.init_params(cfg.model.init_scale, &mut stream(seed, &[STREAM_INIT]));
    Ok(ClientSetup {
        spec,
        num_classes: dataset.num_classes,
        shards,
        init,
    })
}

/// Mean and population std of per-client test accuracy under each client's
/// personalised model.
pub fn evaluate(state: &FederatedState, spec: &ModelSpec, shards: &[ClientShard]) -> Result<(f64, f64)> {
    let accs: Vec<f64> = shards
        .par_iter()
        .enumerate()
        .map(|(i, s)| crate::model::accuracy(spec, state.personalized_model(i), &s.test))
        .collect::<Result<_>>()?;
    Ok(mean_std(&accs))
}

/// One seed of one algorithm on a prepared client set.
pub fn run_clients(setup: &ClientSetup, algo: &AlgoConfig, diagnostics: bool, seed: u64) -> Result<SeedRun> {
    let mut algo = algo.clone();
    algo.seed = seed;
    algo.validate()?;
    let objectives: Vec<ShardObjective> = setup
        .shards
        .iter()
        .map(|s| ShardObjective::new(setup.spec, s))
        .collect();
    let n = objectives.len();
    let mut state = FederatedState::new(setup.init.clone(), n, algo.algorithm)?;
    let mut records = Vec::with_capacity(algo.rounds + 1);
    let mut attention = Vec::new();
    let mut probe = diagnostics.then(|| AssumptionProbe::new(algo.lambda));

    for k in 0..=algo.rounds {
        let mut delta = None;
        if k > 0 {
            let out = run_round(&state, &algo, &objectives)?;
            delta = out.delta;
            if let Some(weights) = out.attention {
                attention.push(AttentionRecord {
                    round: k,
                    participants: out.state.participants.clone(),
                    weights,
                });
            }
            state = out.state;
        }
        let (mean, std) = evaluate(&state, &setup.spec, &setup.shards)?;
        let (objective, grad_norm_sq) = match probe.as_mut() {
            Some(p) => {
                let models = personalized_models(&state);
                let snap = Snapshot::evaluate(&models, &objectives, &algo)?;
                let g = snap.grad_norm_sq(algo.lambda);
                let obj = snap.objective;
                if !obj.is_finite() || !g.is_finite() {
                    return Err(Error::Divergence {
                        round: k,
                        client: 0,
                        message: "non-finite objective".into(),
                    });
                }
                p.observe(&models, snap.grad_f, snap.grad_r);
                (Some(obj), Some(g))
            }
            None => (None, None),
        };
        records.push(RoundRecord {
            round: k,
            mean_test_accuracy: mean,
            std_test_accuracy: std,
            delta,
            participants: if k == 0 { n } else { state.participants.len() },
            objective,
            grad_norm_sq,
        });
        log::debug!("{} seed {seed} round {k}: accuracy {mean:.4}", algo.algorithm);
    }
    Ok(SeedRun {
        seed,
        algorithm: algo.algorithm,
        records,
        attention,
        probe,
    })
}

/// Runs `algorithm` over every configured seed.
pub fn run_algorithm(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<MetricsSeries> {
    cfg.validate()?;
    let mut algo = cfg.algo.clone();
    algo.algorithm = algorithm;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let setup = prepare_clients(cfg, seed)?;
            run_clients(&setup, &algo, cfg.diagnostics, seed)
        })
        .collect::<Result<_>>()?;
    let final_accuracies: Vec<f64> = runs.iter().map(SeedRun::final_accuracy).collect();
    let (mean, std) = mean_std(&final_accuracies);
    Ok(MetricsSeries {
        algorithm,
        summary: AlgorithmSummary {
            algorithm,
            seeds: cfg.seeds.clone(),
            final_accuracies,
            mean_final_accuracy: mean,
            std_final_accuracy: std,
        },
        runs,
    })
}

/// Runs the configured algorithm over every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    run_algorithm(cfg, cfg.algo.algorithm)
}

/// Runs the configured algorithm and everything in `compare`.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Vec<MetricsSeries>> {
    cfg.algorithms().into_iter().map(|a| run_algorithm(cfg, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            dataset: DatasetConfig::Synthetic {
                num_classes: 3,
                input_dim: 4,
                samples_per_class: 30,
                separation: 3.0,
                noise_sigma: 0.5,
                label_shift_groups: 1,
            },
            ..Default::default()
        };
        c.partition.n_clients = 4;
        c.algo.rounds = 3;
        c.seeds = vec![1, 2];
        c
    }

    #[test]
    fn zero_rounds_has_initial_record_only() {
        let mut c = small();
        c.algo.rounds = 0;
        let m = run_experiment(&c).unwrap();
        for r in &m.runs {
            assert_eq!(r.records.len(), 1);
            assert_eq!(r.records[0].round, 0);
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let mut c = small();
        c.diagnostics = true;
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a, b);
        for r in &a.runs {
            assert_eq!(r.records.len(), 4);
            assert!(r.records.iter().all(|x| (0.0..=1.0).contains(&x.mean_test_accuracy)));
            assert!(r.records[1].delta.is_some());
            assert!(r.records.iter().all(|x| x.grad_norm_sq.unwrap().is_finite()));
            assert_eq!(r.attention.len(), 3);
            let p = r.probe.as_ref().unwrap();
            assert!(p.max_grad_f.is_finite() && p.max_grad_r.is_finite());
        }
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
