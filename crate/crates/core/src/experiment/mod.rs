//! Experiment files, load sweeps across policies, and CSV output.

mod config;
mod csv;
mod sweep;

pub use config::{load_config, ExperimentConfig, ModelSpec, Policy, SimulationSpec};
pub use csv::{csv_header, emit_csv, format_float, to_csv_string, write_csv};
pub use sweep::{sweep, RowValues, SweepRow, SweepTable};
