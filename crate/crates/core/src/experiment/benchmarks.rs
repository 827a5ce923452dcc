//! Synthetic noisy-label benchmarks.

use serde_json::{json, Map, Value};

use super::{ArmSpec, DatasetSpec, ExperimentSpec, Generator};
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::train::{Method, SCHEMA_VERSION};

pub const BENCHMARK_NAMES: [&str; 4] = [
    "moons-symmetric-0.4",
    "moons-pairwise-0.45",
    "blobs-symmetric-0.4",
    "blobs-pairwise-0.45",
];

/// A named dataset recipe with the training settings it was calibrated for.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub dataset: DatasetSpec,
    pub config: Map<String, Value>,
}

impl Benchmark {
    /// Experiment running `methods` on this benchmark.
    pub fn experiment(&self, methods: Vec<ArmSpec>, root_seed: u64, repetitions: usize) -> ExperimentSpec {
        ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            dataset: self.dataset.clone(),
            methods,
            config: self.config.clone(),
            root_seed,
            repetitions,
            output_dir: None,
        }
    }

    /// Every method, with CooL last.
    pub fn all_methods() -> Vec<ArmSpec> {
        Method::ALL.into_iter().map(ArmSpec::Method).collect()
    }
}

/// Calibrated so Standard visibly memorizes and the joint phase starts near
/// the pre-training peak. `start_epoch` tracks that peak, so it differs per
/// noise type.
pub fn benchmark(name: &str) -> Result<Benchmark> {
    let moons = |noise: NoiseSpec, start_epoch: usize| {
        let config = json!({
            "hidden": [64, 64],
            "epochs": 60,
            "start_epoch": start_epoch,
            "batch_size": 32,
            "learning_rate": 0.02,
            "momentum": 0.9,
            "beta": 0.0,
            "alpha": {"alpha0": 0.05, "end_epoch": 10, "mode": "linear_decay"},
        });
        let dataset = DatasetSpec {
            generator: Generator::TwoMoons {
                per_class: 600,
                noise_std: 0.15,
            },
            noise,
            test_fraction: 0.5,
            seed: None,
        };
        (dataset, config)
    };
    let blobs = |noise: NoiseSpec, per_class: usize, start_epoch: usize, beta: f64| {
        let config = json!({
            "hidden": [64],
            "epochs": 30,
            "start_epoch": start_epoch,
            "batch_size": 32,
            "learning_rate": 0.02,
            "momentum": 0.9,
            "beta": beta,
            "alpha": {"alpha0": 0.05, "end_epoch": 10, "mode": "linear_decay"},
        });
        let dataset = DatasetSpec {
            generator: Generator::Blobs {
                classes: 4,
                dim: 32,
                per_class,
                spread: 0.3,
            },
            noise,
            test_fraction: 0.25,
            seed: None,
        };
        (dataset, config)
    };
    let (dataset, config) = match name {
        "moons-symmetric-0.4" => moons(NoiseSpec::Symmetric { rate: 0.4 }, 12),
        "moons-pairwise-0.45" => moons(NoiseSpec::Pairwise { rate: 0.45 }, 4),
        "blobs-symmetric-0.4" => blobs(NoiseSpec::Symmetric { rate: 0.4 }, 400, 8, 0.02),
        "blobs-pairwise-0.45" => blobs(NoiseSpec::Pairwise { rate: 0.45 }, 150, 6, 0.0),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown benchmark '{other}'; known: {}",
                BENCHMARK_NAMES.join(", ")
            )))
        }
    };
    let Value::Object(config) = config else { unreachable!() };
    Ok(Benchmark {
        name: BENCHMARK_NAMES.iter().find(|n| **n == name).expect("matched above"),
        dataset,
        config,
    })
}
