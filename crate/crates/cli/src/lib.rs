//! Experiment runner: TOML specs in, traces, summaries and plot data out.

pub mod experiment;
pub mod spec;

pub use experiment::{plotdata_dir, run_experiment, summarize_dir, Manifest};
pub use spec::{Algorithm, ExperimentSpec, Overrides};
