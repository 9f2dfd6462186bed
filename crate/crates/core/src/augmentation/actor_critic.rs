use std::collections::BTreeMap;

use super::ops::{augmented, call, rephrase};
use super::{AugmentBudgets, AugmentError, AugmentOutcome, AugmentationNote};
use crate::experience::{StepRecord, Trajectory, TrajectoryDetail};
use crate::model::{extract_final_answer, is_correct, AgentSpec, Generator};
use crate::topology::{actor_prompt, actor_regenerate_prompt, critic_prompt, ActorCriticAgents, ProblemInstance};

/// Gold-blind repair of a failed actor-critic trajectory.
///
/// The critic, which never sees the gold answer, supplies the feedback; the
/// harness alone checks the regenerated answer against gold. On success the
/// actor gets its original prompt paired with the rephrased regeneration and
/// the critic gets the feedback that led there.
pub fn augment_actor_critic(
    gen: &Generator,
    agents: &ActorCriticAgents,
    rephraser: &AgentSpec,
    problem: &ProblemInstance,
    failed: &Trajectory,
    budgets: AugmentBudgets,
    iteration: u32,
) -> Result<AugmentOutcome, AugmentError> {
    budgets.validate()?;
    let actor = &agents.actor;
    let critic = &agents.critic;
    let original = failed
        .step_of(&actor.agent_id)
        .ok_or_else(|| AugmentError::MissingStep(actor.agent_id.clone()))?
        .output
        .clone();

    for f in 1..=budgets.max_f {
        let critic_user = critic_prompt(agents, problem, &original)?;
        let feedback = call(gen, critic, &critic_user)?;
        if feedback.trim().is_empty() {
            tracing::info!(agent = %critic.agent_id, try_ = f, "empty feedback counts as a failed try");
            continue;
        }
        for r in 1..=budgets.max_re {
            let regen_user = actor_regenerate_prompt(agents, problem, &original, &feedback)?;
            let regenerated = call(gen, actor, &regen_user)?;
            let answer = extract_final_answer(&regenerated, problem.task_kind).ok();
            if !is_correct(answer.as_ref(), &problem.gold_answer, problem.task_kind) {
                continue;
            }
            let rephrased = rephrase(gen, rephraser, problem, &regenerated)?;
            let note = AugmentationNote::new(
                actor.agent_id.clone(),
                feedback.clone(),
                regenerated,
                rephrased.clone(),
                (f, r),
            );
            let steps = vec![
                augmented(
                    StepRecord::direct(
                        actor.agent_id.clone(),
                        actor.system_prompt.clone(),
                        actor_prompt(agents, problem)?,
                        rephrased,
                        iteration,
                    ),
                    &note,
                ),
                augmented(
                    StepRecord::direct(critic.agent_id.clone(), critic.system_prompt.clone(), critic_user, feedback, iteration),
                    &note,
                ),
            ];
            let rewards: BTreeMap<_, _> = steps.iter().map(|s| (s.agent_id.clone(), 1.0)).collect();
            let trajectory = Trajectory {
                problem_id: problem.problem_id.clone(),
                steps,
                final_answer: answer,
                rewards,
                detail: TrajectoryDetail::Pipeline,
            };
            return Ok(AugmentOutcome::Success { note, trajectory });
        }
    }
    Ok(AugmentOutcome::Exhausted {
        target: actor.agent_id.clone(),
        attempts: (budgets.max_f, budgets.max_re),
    })
}
