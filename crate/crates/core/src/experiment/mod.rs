//! Experiment specification, arm execution and result files.
//!
//! An experiment is a dataset recipe, a list of method arms and a number of
//! repetitions. Repetition `r` uses the seed `derive_seed(root_seed, r)`;
//! every arm of a repetition sees the same data and the same training seed.

pub mod benchmarks;
pub mod theorem;

pub use benchmarks::{benchmark, Benchmark, BENCHMARK_NAMES};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::noise::{import_dataset, load_idx, make_blobs, make_two_moons, NoiseSpec, NoisyDataset};
use crate::seed::derive_seed;
use crate::train::{self, Method, RunRecord, TrainConfig, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
    },
    TwoMoons {
        per_class: usize,
        noise_std: f64,
    },
    /// A dataset previously written by `export-dataset`.
    Csv {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    /// Noise injected into the training split; the test split stays clean.
    pub noise: NoiseSpec,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Fixes the data across repetitions; otherwise each repetition draws
    /// its own data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A train/test pair. Only the training split carries label noise.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
}

impl DatasetSpec {
    /// Builds the data of repetition seed `rep_seed`.
    pub fn prepare(&self, rep_seed: u64) -> Result<PreparedData> {
        let base = self.seed.unwrap_or_else(|| derive_seed(rep_seed, 0));
        let full = match &self.generator {
            Generator::Blobs {
                classes,
                dim,
                per_class,
                spread,
            } => make_blobs(*classes, *dim, *per_class, *spread, derive_seed(base, 0))?,
            Generator::TwoMoons { per_class, noise_std } => {
                make_two_moons(*per_class, *noise_std, derive_seed(base, 0))?
            }
            Generator::Csv { path } => import_dataset(path, None)?,
            Generator::Idx { images, labels } => load_idx(images, labels)?,
        };
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        let (train, test) = full.split_holdout(self.test_fraction, derive_seed(base, 1))?;
        let train = match self.noise {
            NoiseSpec::None => train,
            ref noise => train.with_noise(noise, derive_seed(base, 2))?,
        };
        Ok(PreparedData { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmSpec {
    Method(Method),
    Detailed {
        method: Method,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_classifiers: Option<usize>,
        /// Overrides applied on top of the experiment-wide config.
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        config: Map<String, Value>,
    },
}

impl ArmSpec {
    pub fn method(&self) -> Method {
        match self {
            ArmSpec::Method(m) | ArmSpec::Detailed { method: m, .. } => *m,
        }
    }

    /// File-name label: the explicit label, `<method>-<n>` when a network
    /// count is given, or the method name.
    pub fn label(&self) -> String {
        match self {
            ArmSpec::Method(m) => m.name().to_string(),
            ArmSpec::Detailed { label: Some(l), .. } => l.clone(),
            ArmSpec::Detailed {
                method,
                n_classifiers: Some(n),
                ..
            } => format!("{method}-{n}"),
            ArmSpec::Detailed { method, .. } => method.name().to_string(),
        }
    }
}

fn default_repetitions() -> usize {
    1
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// JSON experiment file.
///
/// ```json
/// {
///   "schema_version": 1,
///   "dataset": {
///     "generator": {"kind": "two_moons", "per_class": 300, "noise_std": 0.15},
///     "noise": {"kind": "symmetric", "rate": 0.4}
///   },
///   "methods": ["standard", "cool", {"method": "cool", "n_classifiers": 3}],
///   "config": {"epochs": 60, "start_epoch": 10},
///   "root_seed": 0,
///   "repetitions": 5,
///   "output_dir": "runs/moons"
/// }
/// ```
///
/// `config` holds [`TrainConfig`] fields; missing fields take their
/// defaults. The training seed is always the repetition seed, and
/// `noise_rate` defaults to the injected rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dataset: DatasetSpec,
    pub methods: Vec<ArmSpec>,
    #[serde(default)]
    pub config: Map<String, Value>,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "schema_version {} is not supported",
                self.schema_version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods listed".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        let mut seen = BTreeMap::new();
        for arm in &self.methods {
            if seen.insert(arm.label(), ()).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate arm label '{}'", arm.label())));
            }
            self.arm_config(arm, 0)?;
        }
        Ok(())
    }

    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        derive_seed(self.root_seed, repetition as u64)
    }

    /// Fully resolved config of `arm` in repetition `repetition`.
    pub fn arm_config(&self, arm: &ArmSpec, repetition: usize) -> Result<TrainConfig> {
        let mut merged = self.config.clone();
        if let ArmSpec::Detailed {
            n_classifiers, config, ..
        } = arm
        {
            merged.extend(config.clone());
            if let Some(n) = n_classifiers {
                merged.insert("n_classifiers".into(), json!(n));
            }
        }
        merged.insert("method".into(), serde_json::to_value(arm.method())?);
        merged.insert("seed".into(), json!(derive_seed(self.repetition_seed(repetition), 1)));
        merged
            .entry("noise_rate")
            .or_insert_with(|| json!(self.dataset.noise.rate()));
        let explicit_last_k = merged.contains_key("last_k");
        let mut config: TrainConfig = serde_json::from_value(Value::Object(merged))?;
        if !explicit_last_k {
            // Short runs average over every epoch rather than failing.
            config.last_k = config.last_k.min(config.epochs);
        }
        config.validate()?;
        Ok(config)
    }
}

/// Result of one (arm, repetition) pair.
#[derive(Debug)]
pub struct ArmOutcome {
    pub label: String,
    pub method: Method,
    pub repetition: usize,
    pub config: TrainConfig,
    pub result: Result<RunRecord>,
}

impl ArmOutcome {
    pub fn file_stem(&self) -> String {
        format!("{}-rep{}", self.label, self.repetition)
    }
}

/// Runs every arm of every repetition on up to `jobs` threads. Outcomes come
/// back in (repetition, arm) order.
pub fn run_arms(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<ArmOutcome>> {
    spec.validate()?;
    let data = (0..spec.repetitions)
        .map(|r| spec.dataset.prepare(spec.repetition_seed(r)))
        .collect::<Result<Vec<_>>>()?;
    let mut arms = Vec::new();
    for r in 0..spec.repetitions {
        for arm in &spec.methods {
            arms.push((r, arm, spec.arm_config(arm, r)?));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        arms.into_par_iter()
            .map(|(r, arm, config)| {
                let result = train::run(&data[r].train, &data[r].test, &config).map(|t| t.record);
                ArmOutcome {
                    label: arm.label(),
                    method: arm.method(),
                    repetition: r,
                    config,
                    result,
                }
            })
            .collect()
    }))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub method: Method,
    pub networks: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_last_k_acc: f64,
    pub std_last_k_acc: f64,
    pub mean_last_k_ensemble_acc: f64,
    pub std_last_k_ensemble_acc: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Last-K accuracy per arm label: mean and sample standard deviation over
/// successful repetitions, in the order arms are listed.
pub fn comparison(spec: &ExperimentSpec, outcomes: &[ArmOutcome]) -> Vec<ComparisonRow> {
    spec.methods
        .iter()
        .map(|arm| {
            let label = arm.label();
            let mine: Vec<&ArmOutcome> = outcomes.iter().filter(|o| o.label == label).collect();
            let ok: Vec<&RunRecord> = mine.iter().filter_map(|o| o.result.as_ref().ok()).collect();
            let acc: Vec<f64> = ok.iter().map(|r| r.summary.last_k_mean_acc).collect();
            let ens: Vec<f64> = ok.iter().map(|r| r.summary.last_k_ensemble_acc).collect();
            let (mean_last_k_acc, std_last_k_acc) = mean_std(&acc);
            let (mean_last_k_ensemble_acc, std_last_k_ensemble_acc) = mean_std(&ens);
            ComparisonRow {
                label,
                method: arm.method(),
                networks: mine.first().map_or(0, |o| o.config.networks()),
                runs: ok.len(),
                failed: mine.len() - ok.len(),
                mean_last_k_acc,
                std_last_k_acc,
                mean_last_k_ensemble_acc,
                std_last_k_ensemble_acc,
            }
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "schema_version",
        "label",
        "method",
        "networks",
        "runs",
        "failed",
        "mean_last_k_acc",
        "std_last_k_acc",
        "mean_last_k_ensemble_acc",
        "std_last_k_ensemble_acc",
    ])?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.label.clone(),
            r.method.to_string(),
            r.networks.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.mean_last_k_acc.to_string(),
            r.std_last_k_acc.to_string(),
            r.mean_last_k_ensemble_acc.to_string(),
            r.std_last_k_ensemble_acc.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Files owned by an experiment inside its output directory.
const OWNED: [&str; 4] = ["curves", "summaries", "comparison.csv", "failures.json"];

/// Prepares `out` for writing. An existing directory is refused unless
/// `force` is set, in which case only the files written by a previous run
/// are removed.
pub fn claim_output_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !force {
            return Err(Error::InvalidArgument(format!(
                "{} already exists; pass --force to overwrite",
                out.display()
            )));
        }
        for name in OWNED {
            let p = out.join(name);
            let removed = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else if p.exists() {
                fs::remove_file(&p)
            } else {
                Ok(())
            };
            removed.map_err(|e| Error::io(&p, e))?;
        }
    }
    for dir in [out.to_path_buf(), out.join("curves"), out.join("summaries")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    Ok(())
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes curves, summaries, the comparison table and, if any arm failed,
/// `failures.json`. Returns the number of failed arms.
pub fn write_outputs(spec: &ExperimentSpec, outcomes: &[ArmOutcome], out: &Path) -> Result<usize> {
    let mut failures = Vec::new();
    for o in outcomes {
        match &o.result {
            Ok(record) => {
                write(
                    out.join("curves").join(format!("{}.csv", o.file_stem())),
                    &record.to_csv()?,
                )?;
                let context = json!({
                    "label": o.label,
                    "repetition": o.repetition,
                    "root_seed": spec.root_seed,
                    "dataset": spec.dataset,
                });
                write(
                    out.join("summaries").join(format!("{}.json", o.file_stem())),
                    &record.summary_json(&o.config, context)?,
                )?;
            }
            Err(e) => failures.push(json!({
                "label": o.label,
                "repetition": o.repetition,
                "error": e.to_string(),
            })),
        }
    }
    write(
        out.join("comparison.csv"),
        &comparison_csv(&comparison(spec, outcomes))?,
    )?;
    if !failures.is_empty() {
        let doc = json!({"schema_version": SCHEMA_VERSION, "failures": failures});
        write(out.join("failures.json"), &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(failures.len())
}

/// One point of a cooperation-weight sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub last_k_mean_acc: f64,
    pub last_k_ensemble_acc: f64,
    pub final_r_hat: f64,
    pub final_r1: f64,
    pub final_r2: f64,
    pub final_r12: f64,
    pub final_label_precision: f64,
}

/// Trains two-network CooL with weights `(λ, 1 − λ)` for each grid value on
/// the data of `repetition`.
pub fn sweep_lambda(spec: &ExperimentSpec, grid: &[f64], repetition: usize, jobs: usize) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidArgument("grid values must lie in [0, 1]".into()));
    }
    let data = spec.dataset.prepare(spec.repetition_seed(repetition))?;
    let arm = ArmSpec::Detailed {
        method: Method::Cool,
        label: None,
        n_classifiers: Some(2),
        config: Map::new(),
    };
    let base = spec.arm_config(&arm, repetition)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        grid.par_iter()
            .map(|&l| {
                let config = TrainConfig {
                    lambda: Some(vec![l, 1.0 - l]),
                    ..base.clone()
                };
                let record = train::run(&data.train, &data.test, &config)?.record;
                let last = record.rows.last().expect("at least one epoch");
                let r = &last.risk_entries;
                Ok(SweepPoint {
                    lambda: l,
                    last_k_mean_acc: record.summary.last_k_mean_acc,
                    last_k_ensemble_acc: record.summary.last_k_ensemble_acc,
                    final_r_hat: last.r_hat,
                    final_r1: r[0],
                    final_r2: r[3],
                    final_r12: r[1],
                    final_label_precision: last.label_precision,
                })
            })
            .collect()
    })
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "schema_version",
        "lambda",
        "last_k_mean_acc",
        "last_k_ensemble_acc",
        "final_r_hat",
        "final_r1",
        "final_r2",
        "final_r12",
        "final_label_precision",
    ])?;
    for p in points {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            p.lambda.to_string(),
            p.last_k_mean_acc.to_string(),
            p.last_k_ensemble_acc.to_string(),
            p.final_r_hat.to_string(),
            p.final_r1.to_string(),
            p.final_r2.to_string(),
            p.final_r12.to_string(),
            p.final_label_precision.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_json() -> &'static str {
        r#"{
            "dataset": {
                "generator": {"kind": "blobs", "classes": 3, "dim": 4, "per_class": 30, "spread": 0.5},
                "noise": {"kind": "symmetric", "rate": 0.2}
            },
            "methods": ["standard", {"method": "cool", "n_classifiers": 3, "config": {"beta": 0.0}}],
            "config": {"epochs": 4, "start_epoch": 1, "last_k": 2, "hidden": [6]},
            "repetitions": 2
        }"#
    }

    #[test]
    fn parses_and_resolves_arm_configs() {
        let spec = ExperimentSpec::from_json(spec_json()).unwrap();
        assert_eq!(spec.methods[1].label(), "cool-3");
        let c = spec.arm_config(&spec.methods[1], 1).unwrap();
        assert_eq!((c.n_classifiers, c.beta, c.epochs, c.noise_rate), (3, 0.0, 4, 0.2));
        assert_eq!(c.seed, derive_seed(spec.repetition_seed(1), 1));
        let s = spec.arm_config(&spec.methods[0], 1).unwrap();
        assert_eq!(s.seed, c.seed);
        assert_eq!(s.beta, TrainConfig::default().beta);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad_method = spec_json().replace("\"standard\"", "\"forward\"");
        assert!(ExperimentSpec::from_json(&bad_method).is_err());
        let empty = spec_json().replace(
            r#"["standard", {"method": "cool", "n_classifiers": 3, "config": {"beta": 0.0}}]"#,
            "[]",
        );
        assert!(ExperimentSpec::from_json(&empty).is_err());
        let dup = spec_json().replace(
            r#"{"method": "cool", "n_classifiers": 3, "config": {"beta": 0.0}}"#,
            r#""standard""#,
        );
        assert!(ExperimentSpec::from_json(&dup).is_err());
        let bad_cfg = spec_json().replace("\"start_epoch\": 1", "\"start_epoch\": 9");
        assert!(ExperimentSpec::from_json(&bad_cfg).is_err());
    }

    #[test]
    fn repetitions_draw_distinct_data_unless_seeded() {
        let spec = ExperimentSpec::from_json(spec_json()).unwrap();
        let a = spec.dataset.prepare(spec.repetition_seed(0)).unwrap();
        let b = spec.dataset.prepare(spec.repetition_seed(1)).unwrap();
        assert_ne!(a.train.instances(), b.train.instances());
        assert_eq!(a.test.noise_rate(), 0.0);
        let fixed = DatasetSpec {
            seed: Some(5),
            ..spec.dataset.clone()
        };
        assert_eq!(
            fixed.prepare(1).unwrap().train.instances(),
            fixed.prepare(2).unwrap().train.instances()
        );
    }

    #[test]
    fn comparison_statistics() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn output_directory_is_not_clobbered() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        claim_output_dir(&out, false).unwrap();
        fs::write(out.join("notes.txt"), "keep").unwrap();
        fs::write(out.join("comparison.csv"), "old").unwrap();
        assert!(claim_output_dir(&out, false).is_err());
        claim_output_dir(&out, true).unwrap();
        assert!(out.join("notes.txt").exists());
        assert!(!out.join("comparison.csv").exists());
    }
}
