//! Config-driven experiments on top of `rgne`: load a JSON description of an
//! uncertain game, solve it over one or more topologies and modes, verify the
//! result and write CSV, JSON and SVG outputs.

pub mod config;
pub mod experiment;
pub mod export;
pub mod svg;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, RunRecord, RunReport};
pub use export::{export_results, ExportError, OutputFiles};
