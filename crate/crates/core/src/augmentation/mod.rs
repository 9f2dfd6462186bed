//! Repairs failed trajectories: gold-grounded feedback, regeneration of one
//! agent's step, re-execution of everything downstream of it, verification
//! against the gold answer and rephrasing into a direct solution.

mod actor_critic;
mod ops;

use serde::{Deserialize, Serialize};

pub use actor_critic::augment_actor_critic;
pub use ops::{
    augment_failed, generate_feedback, propagate_downstream, regenerate_step, rephrase,
    Augmenter, Propagation,
};

use crate::experience::Trajectory;
use crate::model::AgentId;
use crate::topology::PipelineError;

/// Retry budgets: whole-solution re-samples, feedback tries, and
/// regeneration tries per feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentBudgets {
    pub max_sol: u32,
    pub max_f: u32,
    pub max_re: u32,
}

impl Default for AugmentBudgets {
    fn default() -> Self {
        Self {
            max_sol: 3,
            max_f: 2,
            max_re: 2,
        }
    }
}

impl AugmentBudgets {
    pub fn new(max_sol: u32, max_f: u32, max_re: u32) -> Self {
        Self {
            max_sol,
            max_f,
            max_re,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, v) in [("max_sol", self.max_sol), ("max_f", self.max_f), ("max_re", self.max_re)] {
            if v == 0 {
                return Err(AugmentError::InvalidBudget(name));
            }
        }
        Ok(())
    }

    /// Backend calls spent by an augmentation that never succeeds, for a
    /// target with `downstream` strict descendants.
    pub fn exhausted_calls(&self, downstream: usize) -> usize {
        let (f, re) = (self.max_f as usize, self.max_re as usize);
        f * (1 + re * (1 + downstream))
    }
}

/// Audit record attached to every augmented training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationNote {
    pub target_agent: AgentId,
    pub feedback: String,
    pub regenerated_output: String,
    pub rephrased_output: String,
    /// 1-based (feedback try, regeneration try) that verified.
    pub attempts: (u32, u32),
}

impl AugmentationNote {
    pub fn new(
        target_agent: AgentId,
        feedback: impl Into<String>,
        regenerated_output: impl Into<String>,
        rephrased_output: impl Into<String>,
        attempts: (u32, u32),
    ) -> Self {
        Self {
            target_agent,
            feedback: feedback.into(),
            regenerated_output: regenerated_output.into(),
            rephrased_output: rephrased_output.into(),
            attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum AugmentOutcome {
    /// `trajectory` holds augmented steps for the target and every re-executed
    /// downstream agent, each rewarded 1.
    Success {
        note: AugmentationNote,
        trajectory: Trajectory,
    },
    Exhausted {
        target: AgentId,
        attempts: (u32, u32),
    },
}

impl AugmentOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, AugmentOutcome::Success { .. })
    }

    pub fn note(&self) -> Option<&AugmentationNote> {
        match self {
            AugmentOutcome::Success { note, .. } => Some(note),
            AugmentOutcome::Exhausted { .. } => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("budget {0} must be at least 1")]
    InvalidBudget(&'static str),
    #[error("{0} returned empty feedback")]
    EmptyFeedback(AgentId),
    #[error("failed trajectory has no step by {0}")]
    MissingStep(AgentId),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
