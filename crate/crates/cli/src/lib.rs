//! Experiment driver for the broker/informed-trader game: configuration,
//! pipelines, verification battery and artifact output.

pub mod checks;
pub mod config;
pub mod io;
pub mod run;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use run::{run, Mode};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "EQUINASH_THREADS";
