//! Command implementations behind the `fedacs` binary.
//!
//! Every command validates its whole configuration, computes all results in
//! memory and only then touches the output directory. Files are written to a
//! temporary name and renamed into place; if any write fails the files
//! already written by that command are removed.

use std::fs;
use std::path::{Path, PathBuf};

use fedacs_core::config::DiagnoseProblem;
use fedacs_core::diagnostics::{
    quadratic_testbed, stationarity_study, testbed_init, HorizonResult, RateFit, StationarityStudy,
};
use fedacs_core::experiment::{prepare_clients, run_comparison};
use fedacs_core::{
    AlgoConfig, AssumptionProbe, ExperimentConfig, IntermediateRule, MetricsSeries, ShardObjective, StepSchedule,
};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad config or arguments; nothing was run.
    Validation(String),
    /// Failure while running or writing results.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fedacs_core::Error> for CliError {
    fn from(e: fedacs_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.into())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

/// Strict TOML parse; unknown keys are errors that name the key.
pub fn parse_config_str(text: &str) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parses, applies overrides and validates.
pub fn load_config(path: &Path, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(dir) = &overrides.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seeds) = &overrides.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files headed for one directory, committed together.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            if let Err(e) = write_atomic(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(CliError::Runtime(
                    anyhow::Error::new(e).context(format!("writing {}", path.display())),
                ));
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

fn json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Runtime(e.into()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(anyhow::anyhow!("{e}")))
}

#[derive(Debug, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub mean_final_accuracy: f64,
    pub std_final_accuracy: f64,
    pub seeds: Vec<u64>,
    pub final_accuracies: Vec<f64>,
    /// Per-seed probes when diagnostics are on.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<AssumptionProbe>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    /// Best mean final accuracy first.
    pub algorithms: Vec<AlgorithmReport>,
}

fn summarize(series: &[MetricsSeries]) -> RunSummary {
    let mut algorithms: Vec<AlgorithmReport> = series
        .iter()
        .map(|m| AlgorithmReport {
            algorithm: m.algorithm.to_string(),
            mean_final_accuracy: m.summary.mean_final_accuracy,
            std_final_accuracy: m.summary.std_final_accuracy,
            seeds: m.summary.seeds.clone(),
            final_accuracies: m.summary.final_accuracies.clone(),
            probes: m.runs.iter().filter_map(|r| r.probe.clone()).collect(),
        })
        .collect();
    algorithms.sort_by(|a, b| {
        b.mean_final_accuracy
            .total_cmp(&a.mean_final_accuracy)
            .then_with(|| a.algorithm.cmp(&b.algorithm))
    });
    RunSummary { algorithms }
}

pub struct RunReport {
    pub series: Vec<MetricsSeries>,
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

/// Runs every configured algorithm over every seed and writes
/// `metrics_<algo>_seed<seed>.csv`, `attention_<algo>_seed<seed>.jsonl`
/// (attention-based algorithms only), `summary.json` and
/// `config.resolved.toml`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    cfg.validate()?;
    let series = run_comparison(cfg)?;
    let summary = summarize(&series);

    let mut out = Outputs::new(&cfg.output_dir);
    for m in &series {
        for run in &m.runs {
            let stem = format!("{}_seed{}", m.algorithm, run.seed);
            out.add(format!("metrics_{stem}.csv"), csv_bytes(&run.records)?);
            if !run.attention.is_empty() {
                let mut lines = Vec::new();
                for rec in &run.attention {
                    serde_json::to_writer(&mut lines, rec).map_err(|e| CliError::Runtime(e.into()))?;
                    lines.push(b'\n');
                }
                out.add(format!("attention_{stem}.jsonl"), lines);
            }
        }
    }
    out.add("summary.json", json(&summary)?);
    out.add("config.resolved.toml", resolved_toml(cfg)?);
    let files = out.commit()?;
    Ok(RunReport { series, summary, files })
}

fn resolved_toml(cfg: &ExperimentConfig) -> CliResult<Vec<u8>> {
    toml::to_string(cfg)
        .map(String::into_bytes)
        .map_err(|e| CliError::Runtime(e.into()))
}

/// Partitions once per seed and writes `manifest_seed<seed>.csv` with
/// `client_id,train_size,test_size,class_0,…`.
pub fn cmd_partition(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.output_dir);
    for &seed in &cfg.seeds {
        let setup = prepare_clients(cfg, seed)?;
        let mut text = String::from("client_id,train_size,test_size");
        for c in 0..setup.num_classes {
            text.push_str(&format!(",class_{c}"));
        }
        text.push('\n');
        for s in &setup.shards {
            text.push_str(&format!("{},{},{}", s.client_id, s.train.len(), s.test.len()));
            for n in s.class_counts(setup.num_classes) {
                text.push_str(&format!(",{n}"));
            }
            text.push('\n');
        }
        out.add(format!("manifest_seed{seed}.csv"), text.into_bytes());
    }
    out.commit()
}

#[derive(Debug, Serialize)]
pub struct DecileReport {
    pub first: f64,
    pub last: f64,
    pub ratio: f64,
}

#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub seed: u64,
    pub problem: DiagnoseProblem,
    pub lambda: f64,
    pub alpha_schedule: StepSchedule,
    pub beta_schedule: StepSchedule,
    pub intermediate_rule: IntermediateRule,
    pub horizons: Vec<HorizonResult>,
    pub fit: Option<RateFit>,
    pub decile_mins: Option<DecileReport>,
    pub probe: AssumptionProbe,
}

/// Runs the stationarity study for one seed.
pub fn diagnose_seed(cfg: &ExperimentConfig, seed: u64) -> CliResult<(DiagnoseReport, StationarityStudy)> {
    let d = &cfg.diagnose;
    let algo = AlgoConfig {
        seed,
        intermediate_rule: d.intermediate_rule,
        ..cfg.algo.clone()
    };
    let study = match d.problem {
        DiagnoseProblem::Quadratic => {
            let objs = quadratic_testbed(d.n_clients, d.dim, d.n_groups, d.spread, seed)?;
            stationarity_study(&objs, &testbed_init(d.dim, seed), &algo, &d.checkpoints)?
        }
        DiagnoseProblem::Configured => {
            let setup = prepare_clients(cfg, seed)?;
            let objs: Vec<ShardObjective> = setup
                .shards
                .iter()
                .map(|s| ShardObjective::new(setup.spec, s))
                .collect();
            stationarity_study(&objs, &setup.init, &algo, &d.checkpoints)?
        }
    };
    let decile_mins = study.trace.decile_mins().map(|(first, last)| DecileReport {
        first,
        last,
        ratio: if last > 0.0 { first / last } else { f64::INFINITY },
    });
    let report = DiagnoseReport {
        seed,
        problem: d.problem,
        lambda: algo.lambda,
        alpha_schedule: algo.alpha_schedule,
        beta_schedule: algo.beta_schedule,
        intermediate_rule: algo.intermediate_rule,
        horizons: study.horizons.clone(),
        fit: study.fit,
        decile_mins,
        probe: study.probe.clone(),
    };
    Ok((report, study))
}

/// Writes `trace_seed<seed>.csv` (the longest run) and
/// `diagnose_seed<seed>.json` for every seed.
pub fn cmd_diagnose(cfg: &ExperimentConfig) -> CliResult<Vec<DiagnoseReport>> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.output_dir);
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let (report, study) = diagnose_seed(cfg, seed)?;
        out.add(format!("trace_seed{seed}.csv"), csv_bytes(&study.trace.records)?);
        out.add(format!("diagnose_seed{seed}.json"), json(&report)?);
        reports.push(report);
    }
    out.commit()?;
    Ok(reports)
}
