//! Trajectories, rewards, good-set filtering, the experience library and dataset export.

mod dataset;
mod library;
mod reward;
mod trajectory;

use std::path::{Path, PathBuf};

pub use dataset::{read_chat_jsonl, validate_chat_jsonl, write_chat_jsonl, ChatRecord, DatasetError};
pub use library::{
    dataset_file, export_dataset, export_pooled, file_sha256, filter_good, iteration_dir,
    library_stats, sha256_hex, AgentManifest, ExperienceLibrary, IterationManifest, LibraryStats,
    TrainingExample,
};
pub use reward::{evaluate_rewards, score, RewardConfig, Setting, DEFAULT_EPSILON};
pub use trajectory::{Provenance, StepRecord, Trajectory, TrajectoryDetail};

use crate::model::AgentId;

#[derive(Debug, thiserror::Error)]
pub enum ExperienceError {
    #[error("reward setting {expected} does not fit a {found} trajectory")]
    SettingMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("reward evaluation needs the problem instance")]
    MissingProblem,
    #[error("epsilon must be finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("example for {agent} has reward {reward}, not above epsilon {epsilon}")]
    BelowThreshold {
        agent: AgentId,
        reward: f64,
        epsilon: f64,
    },
    #[error("augmented example for {0} carries no augmentation note")]
    MissingNote(AgentId),
    #[error("empty dataset for {0}")]
    EmptyDataset(AgentId),
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
    #[error("{path}: corrupt library: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl ExperienceError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> Self + '_ {
        move |source| Self::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn corrupt(path: &Path, reason: &str) -> Self {
        Self::Corrupt {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}
