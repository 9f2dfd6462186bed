use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationNote;
use crate::games::GameKind;
use crate::model::{AgentId, Answer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Augmented,
}

/// One agent invocation inside a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub agent_id: AgentId,
    pub system_prompt: String,
    pub rendered_prompt: String,
    pub output: String,
    pub provenance: Provenance,
    pub iteration: u32,
    /// A later step by the same agent replaced this one (e.g. a regenerated
    /// actor answer); superseded steps never become training examples.
    #[serde(default)]
    pub superseded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<AugmentationNote>,
}

impl StepRecord {
    pub fn direct(
        agent_id: AgentId,
        system_prompt: impl Into<String>,
        rendered_prompt: impl Into<String>,
        output: impl Into<String>,
        iteration: u32,
    ) -> Self {
        Self {
            agent_id,
            system_prompt: system_prompt.into(),
            rendered_prompt: rendered_prompt.into(),
            output: output.into(),
            provenance: Provenance::Direct,
            iteration,
            superseded: false,
            note: None,
        }
    }
}

/// Setting-specific facts needed to assign rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryDetail {
    /// A DAG pipeline run; reward is terminal correctness.
    Pipeline,
    ActorCritic {
        actor: AgentId,
        judgment: AgentId,
        critic: AgentId,
        initial_answer: Option<Answer>,
        /// Judgment verdict on the initial answer; unparsable counts as false.
        verdict: bool,
        verdict_parsed: bool,
        regenerated: bool,
        regenerated_answer: Option<Answer>,
    },
    Match {
        game: GameKind,
        utilities: BTreeMap<AgentId, f64>,
        /// Utility each player is measured against when deciding good data.
        baselines: BTreeMap<AgentId, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem_id: String,
    pub steps: Vec<StepRecord>,
    /// Extracted answer of the terminal step; `None` when it carried no marker.
    pub final_answer: Option<Answer>,
    #[serde(default)]
    pub rewards: BTreeMap<AgentId, f64>,
    pub detail: TrajectoryDetail,
}

impl Trajectory {
    pub fn is_unanswered(&self) -> bool {
        self.final_answer.is_none()
    }

    pub fn agents(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = Vec::new();
        for s in &self.steps {
            if !ids.contains(&s.agent_id) {
                ids.push(s.agent_id.clone());
            }
        }
        ids
    }

    /// Steps of `agent` eligible as training data.
    pub fn trainable_steps<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a StepRecord> {
        self.steps
            .iter()
            .filter(move |s| &s.agent_id == agent && !s.superseded)
    }

    pub fn step_of(&self, agent: &AgentId) -> Option<&StepRecord> {
        self.steps.iter().rev().find(|s| &s.agent_id == agent && !s.superseded)
    }

    pub fn reward(&self, agent: &AgentId) -> Option<f64> {
        self.rewards.get(agent).copied()
    }
}
