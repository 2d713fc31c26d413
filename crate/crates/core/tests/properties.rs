//! Invariants checked over generated inputs.

use std::collections::BTreeSet;

use fedacs_core::diagnostics::StationarityTrace;
use fedacs_core::federated::{run_round, sample_participants};
use fedacs_core::model::{forward_loss, softmax};
use fedacs_core::similarity::{attention_aggregate, quantile_threshold, similarity_matrix};
use fedacs_core::*;
use proptest::prelude::*;

fn models_strategy() -> impl Strategy<Value = Vec<ParamVector>> {
    (1usize..8, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(
            prop::collection::vec(-3.0f64..3.0, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3)),
            n,
        )
        .prop_map(|vs| vs.into_iter().map(ParamVector::new).collect())
    })
}

fn quad_objectives(n: usize, d: usize, offset: f64) -> Vec<QuadraticObjective> {
    (0..n)
        .map(|i| QuadraticObjective {
            center: ParamVector::new((0..d).map(|k| ((i * d + k) as f64 * 0.37 + offset).sin()).collect()),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attention_rows_are_stochastic(models in models_strategy(), p in 0.0f64..=1.0) {
        let s = similarity_matrix(&models).unwrap();
        let delta = quantile_threshold(&s, p).unwrap();
        let (_, w) = attention_aggregate(&models, &s, delta).unwrap();
        for i in 0..models.len() {
            let row = w.row(i);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row[i] > 0.0);
            for (j, &x) in row.iter().enumerate() {
                if j != i && !(s.get(i, j) > delta && s.get(i, j) > 0.0) {
                    prop_assert_eq!(x, 0.0);
                }
            }
        }
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(models in models_strategy()) {
        let s = similarity_matrix(&models).unwrap();
        for i in 0..s.n() {
            prop_assert_eq!(s.get(i, i), 1.0);
            for j in 0..s.n() {
                prop_assert_eq!(s.get(i, j), s.get(j, i));
                prop_assert!((-1.0..=1.0).contains(&s.get(i, j)));
            }
        }
    }

    #[test]
    fn quantile_is_monotone_in_p(models in models_strategy(), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let s = similarity_matrix(&models).unwrap();
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile_threshold(&s, lo).unwrap() <= quantile_threshold(&s, hi).unwrap());
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn loss_is_non_negative(params in prop::collection::vec(-5.0f64..5.0, 9), x in prop::collection::vec(-2.0f64..2.0, 2), y in 0usize..3) {
        let spec = ModelSpec::linear(2, 3);
        let batch = Batch::new(x, 2, vec![y]).unwrap();
        prop_assert!(forward_loss(&spec, &params, &batch).unwrap() >= 0.0);
    }

    #[test]
    fn running_min_never_increases(values in prop::collection::vec(0.0f64..100.0, 1..50)) {
        let mut t = StationarityTrace::default();
        for (k, v) in values.iter().enumerate() {
            t.push(k, 0.0, *v).unwrap();
        }
        for pair in t.records.windows(2) {
            prop_assert!(pair[1].running_min <= pair[0].running_min);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(t.records.last().unwrap().running_min, min);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn participants_are_sorted_distinct_and_sized(n in 1usize..200, fraction in 0.01f64..=1.0, seed: u64, round in 0usize..100) {
        let p = sample_participants(n, fraction, seed, round);
        let want = ((fraction * n as f64).round() as usize).clamp(1, n);
        prop_assert_eq!(p.len(), want);
        prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.iter().all(|&i| i < n));
    }

    #[test]
    fn partition_conserves_samples(
        classes in 2usize..6,
        per_class in 10usize..40,
        n_clients in 1usize..6,
        alpha in 0.3f64..20.0,
        pathological: bool,
        seed: u64,
    ) {
        let data = data::make_synthetic_clusters(classes, 2, per_class, 2.0, 0.5, seed).unwrap();
        let cfg = PartitionConfig {
            scheme: if pathological { PartitionScheme::Pathological } else { PartitionScheme::Dirichlet },
            n_clients,
            dirichlet_alpha: alpha,
            classes_per_client: 2.min(classes),
            seed,
            ..Default::default()
        };
        let shards = match data::partition(&data, &cfg) {
            Ok(s) => s,
            // Heavy skew can leave a client empty; that is a reported error, not a loss of samples.
            Err(Error::Partition(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let mut seen = BTreeSet::new();
        for s in &shards {
            prop_assert!(!s.train.is_empty() && !s.test.is_empty());
            for &i in s.train_index.iter().chain(&s.test_index) {
                prop_assert!(seen.insert(i));
            }
        }
        // Pathological clients claim n·k class slots; unclaimed classes are dropped.
        let claimed = if pathological { (n_clients * cfg.classes_per_client).min(classes) } else { classes };
        prop_assert_eq!(seen.len(), claimed * per_class);
    }

    #[test]
    fn non_participants_are_bitwise_frozen(n in 2usize..12, fraction in 0.1f64..0.9, seed: u64, alg in 0usize..4) {
        let algorithm = [Algorithm::Fedacs, Algorithm::Fedavg, Algorithm::Fedamp, Algorithm::Local][alg];
        let objs = quad_objectives(n, 3, 0.5);
        let cfg = AlgoConfig {
            algorithm,
            participation_fraction: fraction,
            seed,
            beta_schedule: StepSchedule::Fixed { value: 0.3 },
            ..Default::default()
        };
        let mut state = FederatedState::new(ParamVector::new(vec![1.0, -0.5, 0.25]), n, algorithm).unwrap();
        for _ in 0..3 {
            let next = run_round(&state, &cfg, &objs).unwrap().state;
            for i in (0..n).filter(|i| !next.participants.contains(i)) {
                prop_assert_eq!(&next.models[i], &state.models[i]);
                prop_assert_eq!(&next.intermediates[i], &state.intermediates[i]);
            }
            state = next;
        }
    }

    #[test]
    fn identical_clients_stay_identical(n in 1usize..8, seed: u64, p in 0.0f64..=1.0, fedamp: bool) {
        let algorithm = if fedamp { Algorithm::Fedamp } else { Algorithm::Fedacs };
        let center = QuadraticObjective { center: ParamVector::new(vec![0.3, -1.0, 2.0]) };
        let objs = vec![center; n];
        let cfg = AlgoConfig { algorithm, pick_ratio_p: p, seed, ..Default::default() };
        let mut state = FederatedState::new(ParamVector::new(vec![1.0, 1.0, 1.0]), n, algorithm).unwrap();
        for _ in 0..5 {
            state = run_round(&state, &cfg, &objs).unwrap().state;
            for m in &state.models {
                prop_assert_eq!(m, &state.models[0]);
            }
        }
    }

    #[test]
    fn unit_threshold_matches_local_training(n in 1usize..8, seed: u64, fraction in 0.2f64..=1.0) {
        let objs = quad_objectives(n, 4, 1.3);
        let base = AlgoConfig {
            pick_ratio_p: 1.0,
            participation_fraction: fraction,
            seed,
            local_steps: 2,
            ..Default::default()
        };
        let local = AlgoConfig { algorithm: Algorithm::Local, ..base.clone() };
        let init = ParamVector::new(vec![0.5, 0.1, -0.2, 0.9]);
        let mut a = FederatedState::new(init.clone(), n, Algorithm::Fedacs).unwrap();
        let mut b = FederatedState::new(init, n, Algorithm::Local).unwrap();
        for _ in 0..5 {
            a = run_round(&a, &base, &objs).unwrap().state;
            b = run_round(&b, &local, &objs).unwrap().state;
            prop_assert_eq!(&a.models, &b.models);
        }
    }
}
