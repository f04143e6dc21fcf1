//! Seeded Monte Carlo experiments, result tables and their serialization.

pub mod config;
pub mod experiments;
pub mod results;
pub mod seed;
pub mod trial;

pub use config::{ExperimentConfig, ExperimentKind, ReceiverKind};
pub use experiments::{
    check, run_ber_sweep, run_experiment, run_tap_error, run_temporal, run_utilization,
};
pub use results::{Format, ResultRow, ResultTable, CSV_HEADER};
