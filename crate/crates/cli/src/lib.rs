//! Library side of the `bootdes` command-line tool: configuration, model
//! files and the train / predict / benchmark / inspect-model commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod model;

pub use commands::{
    cmd_inspect, cmd_predict, cmd_train, run_benchmark, train_model, BenchmarkOutcome,
};
pub use config::{ExperimentConfig, Overrides, Settings};
pub use error::CliError;
pub use model::ModelFile;
