//! Library half of the `rislab` command-line driver: run configuration,
//! dataset file I/O, and the sweep experiment machinery. The binary in
//! `main.rs` is a thin argument parser over these functions, so every
//! behaviour the CLI exposes is testable in-process.

pub mod config;
pub mod experiment;
pub mod io;

pub use config::{parse_config, RunConfig};
pub use experiment::{run_experiment, CellResult, ExperimentSpec, Method, Sweep};
pub use io::{read_channels, write_channels};
