//! Run configuration, parameter sweeps, and deterministic CSV output.

pub mod config;
pub mod experiment;
pub mod lightcone;
pub mod table;

pub use config::{parse_config, ConfigError, Experiment, SweepConfig};
pub use experiment::{resolve_engine, run_experiment, RunError};
pub use lightcone::{fit_lightcone_velocity, Profile, DEFAULT_FRONT_THRESHOLD};
pub use table::{emit_csv, write_csv, ResultTable, Row, CSV_HEADER};
