//! Seeded experiment sweeps: configuration, row execution and result files.

pub mod config;
pub mod run;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{Experiment, Method, Overrides, Profile, Scheme};
pub use run::{run_all, tasks, Row, Task, TIMING_COLUMNS};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn serialize_display<T: Display, S: serde::Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

/// Reads and resolves a configuration file.
pub fn load_experiment(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Experiment::from_json(&text, overrides)
}

/// Provenance of a run.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub solver: &'static str,
    /// SHA-256 of the canonical JSON of `experiment`.
    pub config_sha256: String,
    pub experiment: &'a Experiment,
    pub points: Vec<irs_swipt::model::SystemConfig>,
    pub random_grouping_max_draws: usize,
    pub overlap_support_threshold: f64,
    pub results: &'static str,
    pub rows: &'a [Task],
}

pub fn config_hash(exp: &Experiment) -> String {
    hex::encode(Sha256::digest(exp.canonical_json().as_bytes()))
}

/// Runs the experiment and writes the CSV and the manifest into `out`.
/// Returns the rows in file order.
pub fn execute(exp: &Experiment, out: &Path) -> Result<Vec<Row>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let tasks = tasks(exp);
    let manifest = Manifest {
        tool: "irs-swipt",
        version: env!("CARGO_PKG_VERSION"),
        solver: irs_swipt::conic::BACKEND,
        config_sha256: config_hash(exp),
        experiment: exp,
        points: exp.points(),
        random_grouping_max_draws: irs_swipt::baselines::MAX_RANDOM_DRAWS,
        overlap_support_threshold: irs_swipt::opt_overlap::SUPPORT_REL,
        results: RESULTS_FILE,
        rows: &tasks,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io(&manifest_path))?;

    let rows = run_all(exp, &tasks)?;
    let csv_path = out.join(RESULTS_FILE);
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(io(&csv_path))?;
    Ok(rows)
}
