//! Seeded experiment runner for the `l1bsde` lattice solvers: reads a
//! config, runs a registered suite over its instances and writes a CSV
//! report plus a JSON summary.

pub mod config;
pub mod generate;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};

use l1bsde::LabError;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use report::{verify, Row, Summary, VerifyError, VerifyOutcome};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("instance {instance}: {source}")]
    Cap { instance: usize, source: LabError },
    #[error("instance {instance}: {source}")]
    Solver { instance: usize, source: LabError },
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    /// 2 for config errors, 3 for cap violations, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(ConfigError::Cap(_)) | RunError::Cap { .. } => 3,
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }
}

fn run_one(cfg: &ExperimentConfig, id: usize) -> Result<Vec<Row>, RunError> {
    let suite = suites::lookup(&cfg.name).expect("validated experiment name");
    let mut inst = suites::Instance { cfg, id, rng: generate::instance_rng(cfg.seed, id) };
    suites::run_instance(suite, &mut inst).map_err(|source| {
        if suites::is_cap_error(&source) {
            RunError::Cap { instance: id, source }
        } else {
            RunError::Solver { instance: id, source }
        }
    })
}

/// Runs every instance. With `parallel > 1` instances run on a pool of
/// that many threads; rows are merged in instance order either way, so
/// the output does not depend on `parallel`.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: usize) -> Result<RunOutput, RunError> {
    let results: Vec<Result<Vec<Row>, RunError>> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        pool.install(|| (0..cfg.instances).into_par_iter().map(|id| run_one(cfg, id)).collect())
    } else {
        (0..cfg.instances).map(|id| run_one(cfg, id)).collect()
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let summary = Summary::from_rows(&cfg.name, cfg.seed, cfg.instances, &rows);
    Ok(RunOutput { rows, summary })
}

/// Runs and writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
pub fn run_to_dir(cfg: &ExperimentConfig, parallel: usize, dir: &Path) -> Result<(RunOutput, PathBuf), RunError> {
    let out = run_experiment(cfg, parallel)?;
    let path = report::write_reports(dir, &out.summary, &out.rows)?;
    Ok((out, path))
}
