use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trajectory::{Trajectory, TrajectoryDetail};
use super::ExperienceError;
use crate::model::{is_correct, AgentId};
use crate::topology::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    ProblemSolving,
    ActorCritic,
    Competitive,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::ProblemSolving => "problem-solving",
            Setting::ActorCritic => "actor-critic",
            Setting::Competitive => "competitive",
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub setting: Setting,
    /// Rewards strictly above this threshold make a step good training data.
    pub epsilon: f64,
}

impl RewardConfig {
    /// 0.5 for binary correctness, 0 for relative match utility.
    pub fn for_setting(setting: Setting) -> Self {
        let epsilon = match setting {
            Setting::ProblemSolving | Setting::ActorCritic => DEFAULT_EPSILON,
            Setting::Competitive => 0.0,
        };
        Self { setting, epsilon }
    }

    pub fn validate(&self) -> Result<(), ExperienceError> {
        if self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(ExperienceError::InvalidEpsilon(self.epsilon))
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn mismatch(cfg: &RewardConfig, t: &Trajectory) -> ExperienceError {
    let found = match t.detail {
        TrajectoryDetail::Pipeline => "pipeline",
        TrajectoryDetail::ActorCritic { .. } => "actor-critic",
        TrajectoryDetail::Match { .. } => "match",
    };
    ExperienceError::SettingMismatch {
        expected: cfg.setting.name(),
        found,
    }
}

/// Per-agent rewards for a finished trajectory.
///
/// * problem-solving: every agent gets final-answer correctness;
/// * actor-critic: the actor is scored on its final answer, the judgment on
///   whether its verdict matched the initial answer's correctness, and the
///   critic (when it ran) on whether its feedback produced a correct answer;
/// * competitive: utility relative to the player's baseline.
///
/// `problem` is required for the first two settings.
pub fn evaluate_rewards(
    t: &Trajectory,
    problem: Option<&ProblemInstance>,
    cfg: &RewardConfig,
) -> Result<BTreeMap<AgentId, f64>, ExperienceError> {
    cfg.validate()?;
    match (cfg.setting, &t.detail) {
        (Setting::ProblemSolving, TrajectoryDetail::Pipeline) => {
            let p = problem.ok_or(ExperienceError::MissingProblem)?;
            let r = indicator(is_correct(t.final_answer.as_ref(), &p.gold_answer, p.task_kind));
            Ok(t.agents().into_iter().map(|a| (a, r)).collect())
        }
        (
            Setting::ActorCritic,
            TrajectoryDetail::ActorCritic {
                actor,
                judgment,
                critic,
                initial_answer,
                verdict,
                regenerated,
                regenerated_answer,
                ..
            },
        ) => {
            let p = problem.ok_or(ExperienceError::MissingProblem)?;
            let correct = |a: Option<&crate::model::Answer>| is_correct(a, &p.gold_answer, p.task_kind);
            let initial_correct = correct(initial_answer.as_ref());
            let mut out = BTreeMap::new();
            out.insert(actor.clone(), indicator(correct(t.final_answer.as_ref())));
            out.insert(judgment.clone(), indicator(*verdict == initial_correct));
            if t.steps.iter().any(|s| &s.agent_id == critic) {
                out.insert(
                    critic.clone(),
                    indicator(!*verdict && *regenerated && correct(regenerated_answer.as_ref())),
                );
            }
            Ok(out)
        }
        (
            Setting::Competitive,
            TrajectoryDetail::Match {
                utilities,
                baselines,
                ..
            },
        ) => Ok(utilities
            .iter()
            .map(|(a, u)| (a.clone(), u - baselines.get(a).copied().unwrap_or(0.0)))
            .collect()),
        _ => Err(mismatch(cfg, t)),
    }
}

/// Evaluates and stores rewards on the trajectory.
pub fn score(
    t: &mut Trajectory,
    problem: Option<&ProblemInstance>,
    cfg: &RewardConfig,
) -> Result<(), ExperienceError> {
    t.rewards = evaluate_rewards(t, problem, cfg)?;
    Ok(())
}
