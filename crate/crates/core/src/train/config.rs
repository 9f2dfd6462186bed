use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::finetune::{FineTuneProvider, NullProvider, RecordedProvider, RemoteProvider, RemoteProviderConfig};
use super::TrainError;
use crate::augmentation::AugmentBudgets;
use crate::experience::{RewardConfig, Setting};
use crate::games::GameConfig;
use crate::model::{BackendKind, Generator, ModelRef, RemoteBackend, RemoteConfig, ScriptEntry, ScriptedBackend};
use crate::topology::TopologyPreset;

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_workers() -> usize {
    4
}

fn default_matches() -> usize {
    8
}

fn default_poll_ms() -> u64 {
    10_000
}

fn default_max_polls() -> u32 {
    720
}

/// Self-play instead of a problem-solving topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub preset: String,
    #[serde(default = "default_matches")]
    pub matches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// Canned responses for scripted models: a JSON array (or JSON Lines) of
    /// `{agent_id, pattern?, response}`.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Null,
    Recorded,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    #[serde(default)]
    pub kind: ProviderKind,
    /// Job transitions replayed by the recorded provider.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
    #[serde(default = "default_max_polls")]
    pub max_polls: u32,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Null,
            script: None,
            poll_interval_ms: default_poll_ms(),
            max_polls: default_max_polls(),
        }
    }
}

/// One training run, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub topology: Option<TopologyPreset>,
    #[serde(default)]
    pub game: Option<GameSection>,
    /// Task file, one JSON problem per line.
    #[serde(default)]
    pub tasks: Option<PathBuf>,
    #[serde(default = "one")]
    pub iterations: u32,
    #[serde(default)]
    pub budgets: AugmentBudgets,
    /// Defaults to 0.5 for correctness rewards and 0 for games.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "yes")]
    pub augment: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Train one shared model on every role's data.
    #[serde(default)]
    pub pooled: bool,
    #[serde(default = "one")]
    pub actor_critic_rounds: u32,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelRef,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub provider: ProviderSection,
}

fn invalid(msg: impl Into<String>) -> TrainError {
    TrainError::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| TrainError::Toml {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(TrainError::io(path))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| TrainError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.tasks);
        resolve(&mut cfg.backend.script);
        resolve(&mut cfg.provider.script);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match (&self.topology, &self.game) {
            (Some(_), Some(_)) => return Err(invalid("set either topology or [game], not both")),
            (None, None) => return Err(invalid("set a topology or a [game] section")),
            (Some(_), None) if self.tasks.is_none() => return Err(invalid("a topology run needs a tasks file")),
            _ => {}
        }
        if let Some(g) = &self.game {
            let cfg = GameConfig::preset(&g.preset).ok_or_else(|| invalid(format!("unknown game preset {:?}", g.preset)))?;
            cfg.validate().map_err(|e| invalid(e.to_string()))?;
            if g.matches == 0 {
                return Err(invalid("game.matches must be at least 1"));
            }
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        if self.actor_critic_rounds == 0 {
            return Err(invalid("actor_critic_rounds must be at least 1"));
        }
        self.budgets.validate().map_err(|e| invalid(e.to_string()))?;
        self.model.validate().map_err(|e| invalid(e.to_string()))?;
        self.reward_config().validate().map_err(|e| invalid(e.to_string()))?;
        if self.model.backend_kind == BackendKind::Scripted && self.backend.script.is_none() {
            return Err(invalid("scripted models need backend.script"));
        }
        if self.provider.kind == ProviderKind::Recorded && self.provider.script.is_none() {
            return Err(invalid("the recorded provider needs provider.script"));
        }
        Ok(())
    }

    pub fn setting(&self) -> Setting {
        match (self.topology, &self.game) {
            (_, Some(_)) => Setting::Competitive,
            (Some(TopologyPreset::ActorCritic), _) => Setting::ActorCritic,
            _ => Setting::ProblemSolving,
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        let mut r = RewardConfig::for_setting(self.setting());
        if let Some(e) = self.epsilon {
            r.epsilon = e;
        }
        r
    }

    pub fn game_config(&self) -> Option<GameConfig> {
        self.game.as_ref().and_then(|g| GameConfig::preset(&g.preset))
    }

    /// Generator wired to the scripted backend (from `backend.script`) and,
    /// for remote models, the chat endpoint named by `API_BASE_URL`.
    pub fn build_generator(&self) -> Result<Generator, TrainError> {
        let mut gen = Generator::new();
        if let Some(path) = &self.backend.script {
            gen = gen.with_scripted(ScriptedBackend::new(load_script(path)?));
        }
        if self.model.backend_kind == BackendKind::RemoteChat {
            let remote = RemoteConfig::from_env()
                .ok_or_else(|| invalid("remote models need API_BASE_URL (and usually API_KEY)"))?;
            gen = gen.with_remote(RemoteBackend::new(remote)?);
        }
        Ok(gen)
    }

    pub fn build_provider(&self) -> Result<Arc<dyn FineTuneProvider>, TrainError> {
        Ok(match self.provider.kind {
            ProviderKind::Null => Arc::new(NullProvider),
            ProviderKind::Recorded => {
                let path = self.provider.script.as_ref().ok_or_else(|| invalid("provider.script missing"))?;
                Arc::new(RecordedProvider::load(path)?)
            }
            ProviderKind::Remote => {
                let mut cfg = RemoteProviderConfig::from_env()
                    .ok_or_else(|| invalid("the remote provider needs API_BASE_URL and API_KEY"))?;
                cfg.poll_interval = std::time::Duration::from_millis(self.provider.poll_interval_ms);
                cfg.max_polls = self.provider.max_polls;
                Arc::new(RemoteProvider::new(cfg)?)
            }
        })
    }
}

/// Reads scripted-backend entries from a JSON array or a JSON Lines file.
pub(crate) fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(TrainError::io(path))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(TrainError::json(path));
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(TrainError::json(path)))
        .collect()
}
