//! Command-line pipeline around `levy_sid`: configuration files, dataset
//! files, JSON reports and plot data.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod report;

pub use error::{Category, CliError};

/// Environment variable overriding the worker thread count.
pub const WORKERS_ENV: &str = "LSID_WORKERS";
