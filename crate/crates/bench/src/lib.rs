//! Config-driven experiment runner for `tolcone`: TOML run configs, a
//! parallel grid runner with per-run trace and sample files, summaries,
//! SVG plots, and the verification suite behind `tolcone verify`.

pub mod config;
mod error;
pub mod plot;
pub mod problem;
pub mod runner;
pub mod summary;
pub mod verify;

pub use config::{load_config, ProblemKind, RunConfig};
pub use error::{BenchError, Result};
pub use runner::{execute, run_grid, RunManifest, RunStatus};
