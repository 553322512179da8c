//! Config-driven experiment runner and calibrator for the APD simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod error;
pub mod presets;
pub mod runner;

pub use calibrate::{calibrate, Calibration, Observable, Relation, SearchOptions, Target, TargetsFile};
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use runner::{execute, run_experiment, Outcome, RunRequest, RunSummary};
