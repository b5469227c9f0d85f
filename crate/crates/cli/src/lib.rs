//! Experiment runner for the complete hinge loss: spec parsing, training
//! runs, artifact directories and gnuplot output.

pub mod artifacts;
pub mod run;
pub mod spec;

use std::io;
use std::path::PathBuf;

use complete_hinge::Error as CoreError;
use thiserror::Error;

pub use run::{run_experiment, run_figures, RunSummary};
pub use spec::{DataSource, ExperimentSpec, Model, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("invalid spec: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("refusing to replace {0}: it exists and was not written by chinge")]
    OutputExists(PathBuf),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for bad input, 3 for numerical failure, 4 for non-separable data.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Spec(_) | CliError::Io { .. } | CliError::OutputExists(_) => 2,
            CliError::Core(e) => match e {
                CoreError::NotSeparable | CoreError::NotSeparableSuspected { .. } => 4,
                CoreError::NonFinite { .. }
                | CoreError::ZeroGradient
                | CoreError::ZeroVector
                | CoreError::DegenerateSupport { .. }
                | CoreError::ParallelDirection
                | CoreError::NoCrossing { .. }
                | CoreError::NoPositiveCrossing
                | CoreError::InsufficientUpdates { .. }
                | CoreError::InsufficientPoints { .. }
                | CoreError::NonPositiveValues { .. }
                | CoreError::GenerationFailed { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
