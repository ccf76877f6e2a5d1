//! Command-line layer for conformal quantile studies: config files, CSV
//! input and output, parallel execution and the `cqe` subcommands.

pub mod backtest;
pub mod cli;
pub mod config;
pub mod error;
pub mod macro_csv;
pub mod output;
pub mod report;
pub mod simulate;

pub use error::{CliError, CliResult};
