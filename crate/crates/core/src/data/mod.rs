//! Datasets, client shards and non-IID partitioning.

mod io;
mod partition;
mod synthetic;

pub use io::{load_csv, load_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{partition, partition_dirichlet, partition_pathological, subsample_train};
pub use synthetic::make_synthetic_clusters;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Batch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Batch,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(samples: Batch, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::contract("dataset needs at least one class"));
        }
        if samples.len() < num_classes {
            return Err(Error::contract(format!(
                "dataset has {} samples for {} classes",
                samples.len(),
                num_classes
            )));
        }
        if let Some(&bad) = samples.labels().iter().find(|&&l| l >= num_classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset { samples, num_classes })
    }

    /// Skips the size check; labels must already be below `num_classes`.
    pub(crate) fn from_checked_labels(samples: Batch, num_classes: usize) -> Self {
        debug_assert!(samples.labels().iter().all(|&l| l < num_classes));
        LabeledDataset { samples, num_classes }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.input_dim()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(self.samples.labels(), self.num_classes)
    }
}

pub fn class_counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// One client's private data. `train_index` and `test_index` record which
/// rows of the source dataset each split came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub train: Batch,
    pub test: Batch,
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

impl ClientShard {
    /// Per-class sample counts over train and test together.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = class_counts(self.train.labels(), num_classes);
        for (c, n) in class_counts(self.test.labels(), num_classes).into_iter().enumerate() {
            counts[c] += n;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    Dirichlet,
    Pathological,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub scheme: PartitionScheme,
    pub n_clients: usize,
    pub dirichlet_alpha: f64,
    pub classes_per_client: usize,
    /// Upper bound on each client's training set; clients holding fewer keep all.
    pub samples_per_client: Option<usize>,
    pub test_fraction: f64,
    /// Set per run from the experiment seed list, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            scheme: PartitionScheme::Dirichlet,
            n_clients: 10,
            dirichlet_alpha: 0.5,
            classes_per_client: 2,
            samples_per_client: None,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::validation("partition.n_clients", "must be positive"));
        }
        if self.scheme == PartitionScheme::Dirichlet
            && !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite())
        {
            return Err(Error::validation(
                "partition.dirichlet_alpha",
                "must be a positive finite number",
            ));
        }
        if self.scheme == PartitionScheme::Pathological && self.classes_per_client == 0 {
            return Err(Error::validation("partition.classes_per_client", "must be positive"));
        }
        if let Some(m) = self.samples_per_client {
            if m < 2 {
                return Err(Error::validation("partition.samples_per_client", "must be at least 2"));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::validation(
                "partition.test_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }
}

/// Gives client groups conflicting label semantics: client `i` belongs to group
/// `i % groups`, and group `g` maps every label `c` to `(c + g) mod C`.
///
/// This turns label-skewed shards into a clustered concept-shift problem where
/// no single global model fits every client.
pub fn relabel_client_groups(shards: &mut [ClientShard], groups: usize, num_classes: usize) {
    if groups <= 1 {
        return;
    }
    for shard in shards.iter_mut() {
        let shift = shard.client_id % groups;
        if shift == 0 {
            continue;
        }
        for batch in [&mut shard.train, &mut shard.test] {
            for l in batch.labels_mut() {
                *l = (*l + shift) % num_classes;
            }
        }
    }
}
