//! Experiment configuration. Every block rejects unknown keys and fills the
//! rest from documented defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{PartitionConfig, PartitionScheme};
use crate::error::{Error, Result};
use crate::federated::{AlgoConfig, Algorithm, IntermediateRule};
use crate::model::{Activation, ModelKind, ModelSpec};

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian class blobs regenerated from each run seed.
    Synthetic {
        #[serde(default = "defaults::num_classes")]
        num_classes: usize,
        #[serde(default = "defaults::input_dim")]
        input_dim: usize,
        #[serde(default = "defaults::samples_per_class")]
        samples_per_class: usize,
        #[serde(default = "defaults::separation")]
        separation: f64,
        #[serde(default = "defaults::noise_sigma")]
        noise_sigma: f64,
        /// Number of client groups with shifted label semantics; 1 disables
        /// the shift.
        #[serde(default = "defaults::one")]
        label_shift_groups: usize,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        num_classes: Option<usize>,
    },
    Csv {
        path: PathBuf,
        num_classes: usize,
        #[serde(default)]
        has_header: bool,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_classes: defaults::num_classes(),
            input_dim: defaults::input_dim(),
            samples_per_class: defaults::samples_per_class(),
            separation: defaults::separation(),
            noise_sigma: defaults::noise_sigma(),
            label_shift_groups: 1,
        }
    }
}

impl DatasetConfig {
    /// Class count when it is known before loading.
    pub fn declared_classes(&self) -> Option<usize> {
        match *self {
            DatasetConfig::Synthetic { num_classes, .. } => Some(num_classes),
            DatasetConfig::Idx { num_classes, .. } => num_classes,
            DatasetConfig::Csv { num_classes, .. } => Some(num_classes),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DatasetConfig::Synthetic {
                num_classes,
                input_dim,
                samples_per_class,
                separation,
                noise_sigma,
                label_shift_groups,
            } => {
                if num_classes < 2 {
                    return Err(Error::validation("dataset.num_classes", "must be at least 2"));
                }
                if input_dim < 2 {
                    return Err(Error::validation("dataset.input_dim", "must be at least 2"));
                }
                if samples_per_class == 0 {
                    return Err(Error::validation("dataset.samples_per_class", "must be positive"));
                }
                if !(separation > 0.0 && separation.is_finite()) {
                    return Err(Error::validation("dataset.separation", "must be positive"));
                }
                if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                    return Err(Error::validation("dataset.noise_sigma", "must be non-negative"));
                }
                if label_shift_groups == 0 || label_shift_groups > num_classes {
                    return Err(Error::validation(
                        "dataset.label_shift_groups",
                        "must lie between 1 and num_classes",
                    ));
                }
            }
            DatasetConfig::Idx { num_classes, .. } => {
                if num_classes.is_some_and(|c| c < 2) {
                    return Err(Error::validation("dataset.num_classes", "must be at least 2"));
                }
            }
            DatasetConfig::Csv { num_classes, .. } => {
                if num_classes < 2 {
                    return Err(Error::validation("dataset.num_classes", "must be at least 2"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    #[default]
    Linear,
    Mlp,
}

/// Model block; input and output sizes come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelFamily,
    pub hidden_dim: usize,
    pub activation: Activation,
    /// Scale of the shared Gaussian initialisation (times `1/√fan_in`).
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelFamily::Linear,
            hidden_dim: 32,
            activation: Activation::Relu,
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        match self.kind {
            ModelFamily::Linear => ModelSpec::linear(input_dim, num_classes),
            ModelFamily::Mlp => ModelSpec {
                kind: ModelKind::Mlp {
                    hidden_dim: self.hidden_dim,
                    activation: self.activation,
                },
                input_dim,
                num_classes,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind == ModelFamily::Mlp && self.hidden_dim == 0 {
            return Err(Error::validation("model.hidden_dim", "must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::validation("model.init_scale", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnoseProblem {
    /// `½‖w − c_i‖²` with clustered centres.
    #[default]
    Quadratic,
    /// The dataset, partition and model blocks of the config.
    Configured,
}

/// Settings for the stationarity driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub problem: DiagnoseProblem,
    pub n_clients: usize,
    pub dim: usize,
    pub n_groups: usize,
    /// Standard deviation of client centres around their group centre.
    pub spread: f64,
    /// Horizons `K` for the rate fit.
    pub checkpoints: Vec<usize>,
    pub intermediate_rule: IntermediateRule,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            problem: DiagnoseProblem::Quadratic,
            n_clients: 10,
            dim: 20,
            n_groups: 2,
            spread: 0.1,
            checkpoints: vec![100, 400, 1600],
            intermediate_rule: IntermediateRule::GradientStep,
        }
    }
}

impl DiagnoseConfig {
    fn validate(&self) -> Result<()> {
        if self.n_clients == 0 || self.dim == 0 || self.n_groups == 0 {
            return Err(Error::validation(
                "diagnose",
                "n_clients, dim and n_groups must be positive",
            ));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::validation("diagnose.spread", "must be non-negative"));
        }
        if self.checkpoints.len() < 2 || self.checkpoints.contains(&0) {
            return Err(Error::validation(
                "diagnose.checkpoints",
                "needs at least 2 positive horizons",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Record `F_λ` and `‖∇F_λ‖²` every round.
    pub diagnostics: bool,
    /// Extra algorithms run on the same seeds for a side-by-side summary.
    pub compare: Vec<Algorithm>,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub algo: AlgoConfig,
    pub diagnose: DiagnoseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            diagnostics: false,
            compare: Vec::new(),
            dataset: DatasetConfig::default(),
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            algo: AlgoConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every block and the cross-field constraints that are knowable
    /// before data is loaded.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "must list at least one seed"));
        }
        self.dataset.validate()?;
        self.partition.validate()?;
        self.model.validate()?;
        self.algo.validate()?;
        self.diagnose.validate()?;
        if self.algo.local_steps == 0 {
            if let Some(a) = self.compare.iter().find(|&&a| a != Algorithm::Fedamp) {
                return Err(Error::validation("compare", format!("{a} needs algo.local_steps > 0")));
            }
        }
        if let Some(classes) = self.dataset.declared_classes() {
            if self.partition.scheme == PartitionScheme::Pathological && self.partition.classes_per_client > classes {
                return Err(Error::validation(
                    "partition.classes_per_client",
                    format!(
                        "{} exceeds the {classes} classes of the dataset",
                        self.partition.classes_per_client
                    ),
                ));
            }
        }
        if let DatasetConfig::Synthetic {
            num_classes,
            samples_per_class,
            ..
        } = self.dataset
        {
            if num_classes * samples_per_class < 2 * self.partition.n_clients {
                return Err(Error::validation(
                    "dataset.samples_per_class",
                    "too few samples for every client to get a train and a test row",
                ));
            }
        }
        Ok(())
    }

    /// Algorithms to run: the configured one first, then `compare` without
    /// repeats.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut out = vec![self.algo.algorithm];
        for &a in &self.compare {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }
}

mod defaults {
    pub fn num_classes() -> usize {
        10
    }
    pub fn input_dim() -> usize {
        20
    }
    pub fn samples_per_class() -> usize {
        100
    }
    pub fn separation() -> f64 {
        3.0
    }
    pub fn noise_sigma() -> f64 {
        1.0
    }
    pub fn one() -> usize {
        1
    }
}
