//! Executes configs and persists one directory per run:
//!
//! ```text
//! <out>/<run-name>/config.toml        canonical config, every default filled
//! <out>/<run-name>/trace.csv          one row per step
//! <out>/<run-name>/samples.csv        flow problems: tuned-model samples
//! <out>/<run-name>/samples_base.csv   flow problems: base-model samples
//! <out>/<run-name>/manifest.json
//! ```
//!
//! Everything except the manifest timestamps is a pure function of the
//! config.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tolcone_core::{run, IterateTrace, ParamVec};
use tolcone_toyzoo::write_samples;

use crate::config::{load_config, RunConfig};
use crate::problem::{flow_samples, Problem};
use crate::{BenchError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const BASE_SAMPLES_FILE: &str = "samples_base.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    /// The solver stopped on a non-finite value; the trace holds the steps
    /// before it.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub solver: String,
    pub problem: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub status: RunStatus,
    pub steps_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// File names relative to the run directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

/// Runs one config into `out_root/<run-name>/`.
///
/// A solver abort is recorded in the manifest and is not an error; errors
/// are reserved for configs that cannot be built and for I/O.
pub fn execute(cfg: &RunConfig, out_root: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Utc::now().to_rfc3339();
    let dir = out_root.join(cfg.run_name());
    fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    write(&dir.join(CONFIG_FILE), cfg.to_toml_string().as_bytes())?;

    let problem = Problem::build(cfg)?;
    let theta0 = ParamVec::new(problem.theta0())?;
    log::info!("{}: {} steps of {}", cfg.run_name(), cfg.max_steps, cfg.solver());
    let result = run(cfg.solver(), theta0, problem.pair(), &cfg.surgery());
    let (trace, theta, error) = match result {
        Ok(out) => (out.trace, Some(out.theta), None),
        Err(abort) => {
            let msg = abort.to_string();
            log::warn!("{}: {msg}", cfg.run_name());
            (abort.trace, None, Some(msg))
        }
    };
    let mut outputs = vec![CONFIG_FILE.to_string(), TRACE_FILE.to_string()];
    write(&dir.join(TRACE_FILE), trace.to_csv_string()?.as_bytes())?;

    if let (Problem::Flow(pair), Some(theta)) = (&problem, &theta) {
        let base = flow_samples(pair, &pair.model().weights, cfg)?;
        write_samples(&dir.join(BASE_SAMPLES_FILE), &base)?;
        let tuned = flow_samples(pair, &pair.tuned_weights(theta.as_slice())?, cfg)?;
        write_samples(&dir.join(SAMPLES_FILE), &tuned)?;
        outputs.push(SAMPLES_FILE.into());
        outputs.push(BASE_SAMPLES_FILE.into());
    }

    let manifest = RunManifest {
        name: cfg.run_name(),
        version: VERSION.into(),
        config_hash: cfg.hash(),
        solver: cfg.solver().to_string(),
        problem: cfg.problem.to_string(),
        seed: cfg.seed,
        started,
        finished: Utc::now().to_rfc3339(),
        status: if error.is_none() {
            RunStatus::Complete
        } else {
            RunStatus::Aborted
        },
        steps_completed: trace.len(),
        error,
        outputs,
    };
    write(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

/// Outcome of one grid entry.
#[derive(Debug)]
pub struct GridEntry {
    pub name: String,
    pub result: Result<RunManifest>,
}

/// Runs every config on up to `workers` threads (0 = one per core).
/// Entries come back in input order; a failing run does not stop the
/// others.
pub fn run_grid(configs: &[RunConfig], out_root: &Path, workers: usize) -> Result<Vec<GridEntry>> {
    let mut seen = BTreeSet::new();
    for c in configs {
        if !seen.insert(c.run_name()) {
            return Err(BenchError::Input(format!(
                "duplicate run name `{}` in grid",
                c.run_name()
            )));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Input(e.to_string()))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|c| GridEntry {
                name: c.run_name(),
                result: execute(c, out_root),
            })
            .collect()
    }))
}

/// Every `*.toml` directly under `dir`, sorted by file name.
pub fn load_grid_dir(dir: &Path) -> Result<Vec<RunConfig>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::Input(format!("no .toml configs in {}", dir.display())));
    }
    paths.iter().map(|p| load_config(p)).collect()
}

pub fn read_trace(path: &Path) -> Result<IterateTrace> {
    let f = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    IterateTrace::read_from(std::io::BufReader::new(f)).map_err(|e| BenchError::from(e).in_file(path))
}
