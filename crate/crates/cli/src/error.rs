use std::fmt::Display;

use aerolink::baselines::BaselineError;
use aerolink::config::ConfigError;
use aerolink::dataset::DatasetError;
use aerolink::geo::GeoError;
use aerolink::pipeline::{ContainerError, PipelineError};
use thiserror::Error;

/// Usage errors exit with 2, runtime errors with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Display) -> Self {
        Self::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        Self::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }

    /// Single-line, prefixed form for stderr.
    pub fn line(&self) -> String {
        let (tag, msg) = match self {
            Self::Usage(m) => ("usage", m),
            Self::Runtime(m) => ("runtime", m),
        };
        let flat: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        format!("error[{tag}]: {}", flat.join(" "))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::runtime(e),
            _ => Self::usage(e),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::ColumnMap(_) | DatasetError::MissingColumn(_) | DatasetError::Ratio(_) => Self::usage(e),
            _ => Self::runtime(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            PipelineError::Dataset(d) => d.into(),
            _ => Self::runtime(e),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        Self::runtime(e)
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        Self::runtime(e)
    }
}

impl From<GeoError> for CliError {
    fn from(e: GeoError) -> Self {
        Self::runtime(e)
    }
}
