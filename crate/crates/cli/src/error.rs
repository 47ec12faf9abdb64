use std::path::PathBuf;

use levy_sid::basis::BasisError;
use levy_sid::estimate::EstimateError;
use levy_sid::numeric::NumericError;
use levy_sid::simulate::SimulateError;
use thiserror::Error;

/// Error categories, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Other,
    Config,
    Data,
    InsufficientData,
    Numeric,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Other => 1,
            Category::Config => 2,
            Category::Data => 3,
            Category::InsufficientData => 4,
            Category::Numeric => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Other => "other",
            Category::Config => "config",
            Category::Data => "data",
            Category::InsufficientData => "insufficient-data",
            Category::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}: at `{path}`: {message}")]
    Config { file: String, path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{file}: {message}")]
    Data { file: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

impl CliError {
    pub fn config(file: impl Into<String>, path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { file: file.into(), path: path.into(), message: message.into() }
    }

    pub fn data(file: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Data { file: file.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn category(&self) -> Category {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => Category::Config,
            CliError::Data { .. } => Category::Data,
            CliError::Io { .. } => Category::Other,
            CliError::Basis(BasisError::Eval { .. }) => Category::Numeric,
            CliError::Basis(_) => Category::Config,
            CliError::Simulate(e) => match e {
                SimulateError::Eval { .. } | SimulateError::NonFinite { .. } => Category::Numeric,
                SimulateError::Dataset(_) => Category::Data,
                _ => Category::Config,
            },
            CliError::Estimate(e) => match e {
                EstimateError::InsufficientData(_) | EstimateError::EmptyCube(_) | EstimateError::TooFewRows { .. } => {
                    Category::InsufficientData
                }
                EstimateError::Numeric(NumericError::Underdetermined { .. }) => Category::InsufficientData,
                EstimateError::Numeric(_) | EstimateError::NotPsd { .. } => Category::Numeric,
                EstimateError::Basis(BasisError::Eval { .. }) => Category::Numeric,
                EstimateError::Config(_) | EstimateError::Basis(_) => Category::Config,
                EstimateError::Component { .. } | EstimateError::Shape(_) | EstimateError::Stable(_) => Category::Other,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category().exit_code()
    }
}
