//! The outer loop: sample, score, filter, augment, export, fine-tune and
//! record new model versions, once per iteration.

mod config;
mod finetune;
mod metrics;
mod registry;
mod runner;
mod tasks;

use std::path::PathBuf;

pub use config::{BackendSection, GameSection, ProviderKind, ProviderSection, RunConfig};
pub use finetune::{
    submit_finetune, FineTuneJob, FineTuneProvider, JobStatus, NullProvider, RecordedJob,
    RecordedProvider, RemoteProvider, RemoteProviderConfig,
};
pub use metrics::{evaluate, AccuracyCount, ActorCriticMetrics, EvalReport};
pub use registry::ModelRegistry;
pub use runner::{
    run_iteration, AgentCounts, Checkpoint, IterationReport, ProblemStatus, Trainer, Workload,
};
pub use tasks::{load_problems, write_problems};

use crate::augmentation::AugmentError;
use crate::experience::ExperienceError;
use crate::games::GameError;
use crate::model::{AgentId, BackendError};
use crate::topology::PipelineError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}:{line}: {reason}")]
    TaskFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dataset {0} has no records; nothing to fine-tune")]
    EmptyDataset(PathBuf),
    #[error("fine-tune job for {agent} failed: {message}")]
    FineTuneFailed { agent: AgentId, message: String },
    #[error("fine-tune provider: {0}")]
    Provider(String),
    #[error("model registry: {0}")]
    Registry(String),
    #[error("stopped after exporting iteration {0}")]
    Halted(u32),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Experience(#[from] ExperienceError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl TrainError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TrainError {
        let path = path.into();
        move |source| TrainError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> TrainError {
        let path = path.into();
        move |source| TrainError::Json { path, source }
    }

    /// Configuration problems, as opposed to failures while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            TrainError::InvalidConfig(_) | TrainError::Toml { .. } | TrainError::TaskFile { .. }
        ) || matches!(self, TrainError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<(), TrainError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(TrainError::io(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(TrainError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(TrainError::io(path))
}
