//! Experiment runner for `structured_tempo`: declarative TOML configs,
//! built-in presets, convergence sweeps and CSV artifacts.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod preset;
pub mod run;
pub mod sweep;

pub use config::{validate_config, ExperimentConfig};
pub use run::{run_experiment, CliError, RunManifest};

/// Default output directory when neither `--out` nor `output_dir` is given.
pub const OUT_DIR_ENV: &str = "STEMPO_OUT_DIR";
