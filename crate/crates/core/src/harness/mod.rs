//! Experiment runner behind the `ksd` binary: config parsing, dispatch to an
//! optimizer with early stopping on held-out data, convergence CSVs, and the
//! oracle self-test.

pub mod config;
pub mod csv;
pub mod experiment;
pub mod selftest;

pub use config::{parse_config, parse_config_str, DatasetSource, ExperimentConfig, OptimizerKind, Task};
pub use csv::{format_sig9, parse_csv, read_csv, render_csv, write_csv, ConvergenceRecord, HEADER};
pub use experiment::{load_data, run_experiment, run_on_data, EarlyStopping, ExperimentOutcome, StopReason, Summary};
