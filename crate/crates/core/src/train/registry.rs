use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, TrainError};
use crate::model::{AgentId, ModelRef};

/// Model version of every agent after every completed iteration; iteration 0
/// holds the base models. Entries are never rewritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    entries: BTreeMap<u32, BTreeMap<AgentId, ModelRef>>,
}

impl ModelRegistry {
    pub fn new(base: BTreeMap<AgentId, ModelRef>) -> Self {
        Self {
            entries: [(0, base)].into(),
        }
    }

    /// Same base model for every agent.
    pub fn uniform<'a>(agents: impl IntoIterator<Item = &'a AgentId>, model: &ModelRef) -> Self {
        Self::new(agents.into_iter().map(|a| (a.clone(), model.clone())).collect())
    }

    pub fn agents(&self) -> Vec<AgentId> {
        self.entries[&0].keys().cloned().collect()
    }

    /// Last completed iteration.
    pub fn latest(&self) -> u32 {
        *self.entries.keys().next_back().expect("base entry always present")
    }

    pub fn models(&self, iteration: u32) -> Option<&BTreeMap<AgentId, ModelRef>> {
        self.entries.get(&iteration)
    }

    pub fn model(&self, iteration: u32, agent: &AgentId) -> Option<&ModelRef> {
        self.entries.get(&iteration)?.get(agent)
    }

    /// Adds the entries of iteration `latest() + 1`, all at once, for exactly
    /// the registered agents.
    pub fn record(&mut self, iteration: u32, models: BTreeMap<AgentId, ModelRef>) -> Result<(), TrainError> {
        let next = self.latest() + 1;
        if iteration != next {
            return Err(TrainError::Registry(format!("expected iteration {next}, got {iteration}")));
        }
        let expected = self.agents();
        let got: Vec<AgentId> = models.keys().cloned().collect();
        if got != expected {
            return Err(TrainError::Registry(format!(
                "iteration {iteration} must list exactly {expected:?}, got {got:?}"
            )));
        }
        self.entries.insert(iteration, models);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let body = serde_json::to_vec_pretty(self).map_err(TrainError::json(path))?;
        write_atomic(path, &body)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(TrainError::io(path))?;
        let reg: Self = serde_json::from_str(&text).map_err(TrainError::json(path))?;
        let agents = reg
            .entries
            .get(&0)
            .ok_or_else(|| TrainError::Registry(format!("{}: no base models", path.display())))?
            .keys()
            .cloned()
            .collect::<Vec<_>>();
        for (t, models) in &reg.entries {
            if models.keys().cloned().collect::<Vec<_>>() != agents {
                return Err(TrainError::Registry(format!("{}: iteration {t} is incomplete", path.display())));
            }
        }
        let expected: Vec<u32> = (0..reg.entries.len() as u32).collect();
        if reg.entries.keys().copied().collect::<Vec<_>>() != expected {
            return Err(TrainError::Registry(format!("{}: iterations are not contiguous", path.display())));
        }
        Ok(reg)
    }
}
