use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Gamma};

use super::{ClientShard, LabeledDataset, PartitionConfig, PartitionScheme};
use crate::error::{Error, Result};
use crate::rng::{stream, SimRng, STREAM_PARTITION, STREAM_SUBSAMPLE};

const DIRICHLET_ATTEMPTS: usize = 100;
/// Every client needs one train and one test sample.
const MIN_CLIENT_SAMPLES: usize = 2;

pub fn partition(data: &LabeledDataset, cfg: &PartitionConfig) -> Result<Vec<ClientShard>> {
    match cfg.scheme {
        PartitionScheme::Dirichlet => partition_dirichlet(data, cfg),
        PartitionScheme::Pathological => partition_pathological(data, cfg),
    }
}

fn indices_by_class(data: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); data.num_classes];
    for (i, &l) in data.samples.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Per-class label skew: for every class the client shares are drawn from
/// `Dirichlet(alpha · 1_n)` and the class's samples are dealt out accordingly.
/// The whole draw is repeated (up to 100 times) until every client holds at
/// least two samples.
pub fn partition_dirichlet(data: &LabeledDataset, cfg: &PartitionConfig) -> Result<Vec<ClientShard>> {
    if cfg.scheme != PartitionScheme::Dirichlet {
        return Err(Error::contract(
            "partition_dirichlet called with a non-dirichlet config",
        ));
    }
    cfg.validate().map_err(|e| Error::contract(e.to_string()))?;
    let n = cfg.n_clients;
    let mut rng = stream(cfg.seed, &[STREAM_PARTITION]);
    let mut by_class = indices_by_class(data);
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
    }
    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| Error::contract(format!("dirichlet alpha: {e}")))?;

    for _ in 0..DIRICHLET_ATTEMPTS {
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut degenerate = false;
        for idx in &by_class {
            let draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                degenerate = true;
                break;
            }
            let len = idx.len();
            let mut cum = 0.0;
            let mut start = 0;
            for (client, d) in draws.iter().enumerate() {
                cum += d / total;
                let end = if client + 1 == n {
                    len
                } else {
                    ((cum * len as f64).round() as usize).clamp(start, len)
                };
                assigned[client].extend_from_slice(&idx[start..end]);
                start = end;
            }
        }
        if !degenerate && assigned.iter().all(|a| a.len() >= MIN_CLIENT_SAMPLES) {
            return build_shards(data, assigned, cfg, &mut rng);
        }
    }
    Err(Error::Partition(format!(
        "could not give each of {n} clients at least {MIN_CLIENT_SAMPLES} samples from {} rows after {DIRICHLET_ATTEMPTS} dirichlet draws",
        data.len()
    )))
}

/// Each client claims `classes_per_client` consecutive classes of a shuffled
/// class order (round-robin), and each class is split evenly among the
/// clients that claimed it. Classes nobody claims are dropped.
pub fn partition_pathological(data: &LabeledDataset, cfg: &PartitionConfig) -> Result<Vec<ClientShard>> {
    if cfg.scheme != PartitionScheme::Pathological {
        return Err(Error::contract(
            "partition_pathological called with a non-pathological config",
        ));
    }
    cfg.validate().map_err(|e| Error::contract(e.to_string()))?;
    let k = cfg.classes_per_client;
    let c = data.num_classes;
    if k > c {
        return Err(Error::contract(format!(
            "classes_per_client {k} exceeds the {c} available classes"
        )));
    }
    let n = cfg.n_clients;
    let mut rng = stream(cfg.seed, &[STREAM_PARTITION]);
    let mut class_order: Vec<usize> = (0..c).collect();
    class_order.shuffle(&mut rng);

    let mut claimants: Vec<Vec<usize>> = vec![Vec::new(); c];
    for client in 0..n {
        for j in 0..k {
            claimants[class_order[(client * k + j) % c]].push(client);
        }
    }

    let mut by_class = indices_by_class(data);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (class, idx) in by_class.iter_mut().enumerate() {
        let owners = &claimants[class];
        if owners.is_empty() {
            continue;
        }
        if idx.len() < owners.len() {
            return Err(Error::Partition(format!(
                "class {class} has {} samples for {} clients",
                idx.len(),
                owners.len()
            )));
        }
        idx.shuffle(&mut rng);
        let base = idx.len() / owners.len();
        let extra = idx.len() % owners.len();
        let mut start = 0;
        for (pos, &client) in owners.iter().enumerate() {
            let size = base + usize::from(pos < extra);
            assigned[client].extend_from_slice(&idx[start..start + size]);
            start += size;
        }
    }
    if let Some(client) = assigned.iter().position(|a| a.len() < MIN_CLIENT_SAMPLES) {
        return Err(Error::Partition(format!(
            "client {client} received only {} samples",
            assigned[client].len()
        )));
    }
    build_shards(data, assigned, cfg, &mut rng)
}

fn build_shards(
    data: &LabeledDataset,
    assigned: Vec<Vec<usize>>,
    cfg: &PartitionConfig,
    rng: &mut SimRng,
) -> Result<Vec<ClientShard>> {
    assigned
        .into_iter()
        .enumerate()
        .map(|(client_id, mut rows)| {
            rows.sort_unstable();
            rows.shuffle(rng);
            let len = rows.len();
            let n_test = ((cfg.test_fraction * len as f64).round() as usize).clamp(1, len - 1);
            let mut test_index = rows[..n_test].to_vec();
            let mut train_index = rows[n_test..].to_vec();
            test_index.sort_unstable();
            train_index.sort_unstable();
            let shard = ClientShard {
                client_id,
                train: data.samples.select(&train_index),
                test: data.samples.select(&test_index),
                train_index,
                test_index,
            };
            match cfg.samples_per_client {
                Some(m) if m < shard.train.len() => subsample_train(&shard, m, cfg.seed),
                _ => Ok(shard),
            }
        })
        .collect()
}

/// Keeps `m` training rows drawn uniformly without replacement, in their
/// original order. The test split is untouched.
pub fn subsample_train(shard: &ClientShard, m: usize, seed: u64) -> Result<ClientShard> {
    let available = shard.train.len();
    if m == 0 || m > available {
        return Err(Error::contract(format!(
            "cannot keep {m} of {available} training samples"
        )));
    }
    let mut rng = stream(seed, &[STREAM_SUBSAMPLE, shard.client_id as u64]);
    let mut picked = index::sample(&mut rng, available, m).into_vec();
    picked.sort_unstable();
    Ok(ClientShard {
        client_id: shard.client_id,
        train: shard.train.select(&picked),
        test: shard.test.clone(),
        train_index: picked.iter().map(|&i| shard.train_index[i]).collect(),
        test_index: shard.test_index.clone(),
    })
}
