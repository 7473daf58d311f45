//! Configuration, serialization and experiment orchestration.

pub mod config;
pub mod io;
pub mod run;

pub use config::{ExperimentConfig, FieldSpec};
pub use io::{read_field, write_field, FieldDump};
pub use run::{
    error_exit_code, run_certify, run_diagnostics, run_mms, run_optimize, run_simulate, RunOutcome,
    RunStatus,
};
