//! Front end for the `dualcert` binary: strict JSON run configs, flag
//! overrides, and artifact writing (`result.json`, `summary.csv`, and one CSV
//! per experiment).

pub mod config;
pub mod run;

pub use config::{CommandKind, Overrides, RunConfig, SEED_ENV};
pub use run::{exit_code, run, run_with_workers, RunOutcome};
