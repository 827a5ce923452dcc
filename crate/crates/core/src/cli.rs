//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 failed
//! theorem check, 3 runtime failure (including failed training arms).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::Error;
use crate::experiment::theorem::{run_theorem_check, TheoremCheckConfig};
use crate::experiment::{
    benchmark, claim_output_dir, comparison, comparison_csv, run_arms, sweep_csv, sweep_lambda, write_outputs, ArmSpec,
    Benchmark, ExperimentSpec, BENCHMARK_NAMES,
};
use crate::noise::{export_dataset, import_dataset};
use crate::train::Method;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cool", version, about = "Cooperative learning under noisy labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the cooperation-risk closed forms with brute-force searches.
    TheoremCheck(TheoremCheckArgs),
    /// Run every (method, repetition) arm of an experiment.
    Train(TrainArgs),
    /// Train two-network CooL across a grid of cooperation weights.
    SweepLambda(SweepArgs),
    /// Write the train or test split of an experiment's dataset to CSV.
    ExportDataset(ExportArgs),
    /// Load a dataset CSV, report its shape and optionally re-export it.
    ImportDataset(ImportArgs),
}

#[derive(Debug, Args)]
struct TheoremCheckArgs {
    /// Predictor counts: `3`, `2..5` (inclusive) or `2,4,6`.
    #[arg(long = "n", default_value = "2..5", value_parser = parse_counts)]
    n_values: Counts,
    /// Share of prediction noise common to the Monte-Carlo predictors.
    #[arg(long, default_value_t = 0.5)]
    correlation: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Random risk triples for the two-classifier check.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where the experiment comes from: a JSON file or a built-in benchmark.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SpecSource {
    /// Experiment JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in benchmark, run with every method.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BENCHMARK_NAMES))]
    benchmark: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    source: SpecSource,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Total epochs for every arm; overrides the config.
    #[arg(long)]
    epochs: Option<usize>,
    /// Arms trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Replace the outputs of a previous run in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SpecSource,
    /// Weights on the first network, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
    )]
    grid: Vec<f64>,
    /// Repetition whose data and seed are used.
    #[arg(long, default_value_t = 0)]
    repetition: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    source: SpecSource,
    #[arg(long, default_value_t = 0)]
    repetition: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Dataset CSV with columns id,true_label,noisy_label,f0,...
    input: PathBuf,
    /// Class count; defaults to one past the largest label.
    #[arg(long)]
    classes: Option<usize>,
    /// Re-export the loaded dataset here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Counts(Vec<usize>);

/// Accepts `k`, `a..b` (inclusive) or a comma-separated list.
fn parse_counts(text: &str) -> std::result::Result<Counts, String> {
    let bad = || format!("'{text}' is not a count, a range a..b or a list");
    let counts: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(format!("empty range {text}"));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?
    };
    if counts.contains(&0) {
        return Err("predictor counts must be positive".into());
    }
    Ok(Counts(counts))
}

enum Failure {
    Usage(String),
    Check(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Check(_) => EXIT_CHECK,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::TheoremCheck(a) => theorem_check(a),
        Command::Train(a) => train(a),
        Command::SweepLambda(a) => sweep(a),
        Command::ExportDataset(a) => export(a),
        Command::ImportDataset(a) => import(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Check(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            f.code()
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> Outcome {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn theorem_check(a: TheoremCheckArgs) -> Outcome {
    let config = TheoremCheckConfig {
        n_values: a.n_values.0,
        correlation: a.correlation,
        samples: a.samples,
        classes: a.classes,
        trials: a.trials,
        seed: a.seed,
    };
    let report = run_theorem_check(&config)?;
    emit(a.out.as_deref(), &report.to_json()?)?;
    for c in &report.checks {
        eprintln!(
            "{} {} (gap {:e}, tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed_gap,
            c.tolerance
        );
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

/// Loads the experiment and applies flag overrides.
fn load_spec(
    source: &SpecSource,
    seed: Option<u64>,
    repetitions: Option<usize>,
    epochs: Option<usize>,
) -> std::result::Result<ExperimentSpec, Failure> {
    let mut spec = match (&source.config, &source.benchmark) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentSpec>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => {
            let b = benchmark(name)?;
            let mut methods = Benchmark::all_methods();
            methods.push(ArmSpec::Detailed {
                method: Method::Cool,
                label: None,
                n_classifiers: Some(3),
                config: Default::default(),
            });
            b.experiment(methods, 0, 5)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(s) = seed {
        spec.root_seed = s;
    }
    if let Some(r) = repetitions {
        spec.repetitions = r;
    }
    if let Some(e) = epochs {
        spec.config.insert("epochs".into(), json!(e));
    }
    spec.validate()?;
    Ok(spec)
}

fn default_jobs(jobs: Option<usize>) -> usize {
    jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn train(a: TrainArgs) -> Outcome {
    let spec = load_spec(&a.source, a.seed, a.repetitions, a.epochs)?;
    let out = a
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set output_dir".into()))?;
    claim_output_dir(&out, a.force)?;
    let outcomes = run_arms(&spec, default_jobs(a.jobs))?;
    let failed = write_outputs(&spec, &outcomes, &out)?;
    print!("{}", comparison_csv(&comparison(&spec, &outcomes))?);
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} arm(s) failed; see {}",
            out.join("failures.json").display()
        )));
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Outcome {
    let spec = load_spec(&a.source, a.seed, None, a.epochs)?;
    if a.repetition >= spec.repetitions {
        return Err(Failure::Usage(format!(
            "repetition {} but the experiment has {}",
            a.repetition, spec.repetitions
        )));
    }
    let points = sweep_lambda(&spec, &a.grid, a.repetition, default_jobs(a.jobs))?;
    emit(a.out.as_deref(), &sweep_csv(&points)?)
}

fn export(a: ExportArgs) -> Outcome {
    let spec = load_spec(&a.source, a.seed, None, None)?;
    let data = spec.dataset.prepare(spec.repetition_seed(a.repetition))?;
    let split = match a.split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    export_dataset(split, &a.out)?;
    eprintln!("wrote {} instances to {}", split.len(), a.out.display());
    Ok(())
}

fn import(a: ImportArgs) -> Outcome {
    let data = import_dataset(&a.input, a.classes)?;
    println!(
        "{}",
        json!({
            "instances": data.len(),
            "classes": data.classes(),
            "dim": data.dim(),
            "noise_rate": data.noise_rate(),
        })
    );
    if let Some(out) = &a.out {
        export_dataset(&data, out)?;
    }
    Ok(())
}
