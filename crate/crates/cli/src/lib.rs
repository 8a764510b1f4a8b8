//! Experiment runner for `gsvie-core`: strict JSON configs in, CSV and JSON
//! artifacts out, plus the `verify` invariant suite.

pub mod config;
pub mod output;
pub mod studies;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Effective configuration, with command-line overrides applied.
    pub config: Option<ExperimentConfig>,
    pub wall_time_seconds: f64,
}
