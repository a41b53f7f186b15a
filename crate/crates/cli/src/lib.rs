//! Command-line runner: argument and config handling, experiment drivers,
//! and CSV/JSON emission.

pub mod args;
pub mod config;
pub mod output;
pub mod run;

pub use args::Cli;
pub use config::{BetaSpec, ExperimentConfig, Format, Subcommand};
pub use output::{write_records, ResultRecord};
pub use run::{run, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite value in row {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] skfluct::Error),
}
