use std::collections::BTreeMap;

use super::{AugmentBudgets, AugmentError, AugmentOutcome, AugmentationNote};
use crate::experience::{Provenance, StepRecord, Trajectory, TrajectoryDetail};
use crate::model::{extract_final_answer, is_correct, prompt, AgentId, AgentSpec, Answer, Bindings, Generator};
use crate::topology::{Pipeline, PipelineError, ProblemInstance};

pub(super) fn call(gen: &Generator, spec: &AgentSpec, user: &str) -> Result<String, AugmentError> {
    gen.ask(spec, user).map_err(|source| {
        PipelineError::Backend {
            agent: spec.agent_id.clone(),
            source,
        }
        .into()
    })
}

pub(super) fn render(spec: &AgentSpec, template: &str, b: &Bindings) -> Result<String, AugmentError> {
    b.render(template).map_err(|source| {
        PipelineError::Prompt {
            agent: spec.agent_id.clone(),
            source,
        }
        .into()
    })
}

/// Asks the external agent to critique `original_output` knowing the gold answer.
/// Returns the rendered prompt and the feedback.
pub fn generate_feedback(
    gen: &Generator,
    ext: &AgentSpec,
    problem: &ProblemInstance,
    original_output: &str,
) -> Result<(String, String), AugmentError> {
    let b = Bindings::new()
        .set(prompt::QUESTION, problem.question.clone())
        .set(prompt::CONTEXT, problem.context_text())
        .set(prompt::ORIGINAL_RESPONSE, original_output)
        .set(prompt::GOLD_ANSWER, problem.gold_answer.clone());
    let user = render(ext, &ext.turn_template, &b)?;
    let feedback = call(gen, ext, &user)?;
    if feedback.trim().is_empty() {
        return Err(AugmentError::EmptyFeedback(ext.agent_id.clone()));
    }
    Ok((user, feedback))
}

/// Re-runs `agent` on its regeneration prompt. `outputs` supplies the
/// predecessor outputs it originally saw.
pub fn regenerate_step(
    gen: &Generator,
    pipeline: &Pipeline,
    agent: &AgentId,
    problem: &ProblemInstance,
    outputs: &BTreeMap<AgentId, String>,
    original_output: &str,
    feedback: &str,
) -> Result<(String, String), AugmentError> {
    let spec = pipeline.agent(agent)?;
    let user = pipeline.render_regenerate(agent, problem, outputs, original_output, feedback)?;
    let output = call(gen, spec, &user)?;
    Ok((user, output))
}

/// Result of re-running the agents downstream of a regenerated step.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// One step per strict descendant, in topological order.
    pub steps: Vec<StepRecord>,
    /// Terminal output after propagation (the regenerated text itself when
    /// the regenerated agent is terminal).
    pub final_output: String,
    pub final_answer: Option<Answer>,
}

/// Re-executes every strict descendant `j` of `k` in topological order.
///
/// `j` reads regenerated outputs from `({k} ∪ Sus(k)) ∩ Pre(j)` and original
/// outputs from the rest of `Pre(j)`.
pub fn propagate_downstream(
    gen: &Generator,
    pipeline: &Pipeline,
    problem: &ProblemInstance,
    k: &AgentId,
    regenerated: &str,
    originals: &BTreeMap<AgentId, String>,
    iteration: u32,
) -> Result<Propagation, AugmentError> {
    let downstream = pipeline.graph().successors_closure(k).map_err(PipelineError::from)?;
    let mut outputs = originals.clone();
    outputs.insert(k.clone(), regenerated.to_string());
    let mut steps = Vec::with_capacity(downstream.len());
    for j in pipeline.order().iter().filter(|j| downstream.contains(*j)) {
        let spec = pipeline.agent(j)?;
        let user = pipeline.render_turn(j, problem, &outputs)?;
        let output = call(gen, spec, &user)?;
        steps.push(StepRecord::direct(
            j.clone(),
            spec.system_prompt.clone(),
            user,
            output.clone(),
            iteration,
        ));
        outputs.insert(j.clone(), output);
    }
    let final_output = outputs[pipeline.terminal()].clone();
    let final_answer = extract_final_answer(&final_output, problem.task_kind).ok();
    Ok(Propagation {
        steps,
        final_output,
        final_answer,
    })
}

/// Rewrites a verified regeneration as a direct solution. An empty rewrite
/// keeps the regenerated text.
pub fn rephrase(
    gen: &Generator,
    rephraser: &AgentSpec,
    problem: &ProblemInstance,
    regenerated: &str,
) -> Result<String, AugmentError> {
    let b = Bindings::new()
        .set(prompt::QUESTION, problem.question.clone())
        .set(prompt::CONTEXT, problem.context_text())
        .set(prompt::ORIGINAL_RESPONSE, regenerated);
    let user = render(rephraser, &rephraser.turn_template, &b)?;
    let out = call(gen, rephraser, &user)?;
    if out.trim().is_empty() {
        tracing::warn!(problem = %problem.problem_id, "empty rephrase, keeping regenerated text");
        return Ok(regenerated.to_string());
    }
    Ok(out)
}

pub(super) fn augmented(mut step: StepRecord, note: &AugmentationNote) -> StepRecord {
    step.provenance = Provenance::Augmented;
    step.note = Some(note.clone());
    step
}

/// Pipeline plus the helper agents augmentation needs.
#[derive(Debug, Clone, Copy)]
pub struct Augmenter<'a> {
    pub pipeline: &'a Pipeline,
    /// Gold-aware feedback provider.
    pub feedback: &'a AgentSpec,
    pub rephraser: &'a AgentSpec,
    pub budgets: AugmentBudgets,
}

impl<'a> Augmenter<'a> {
    /// Tries targets in topological order and stops at the first success.
    pub fn augment(
        &self,
        gen: &Generator,
        problem: &ProblemInstance,
        failed: &Trajectory,
        iteration: u32,
    ) -> Result<AugmentOutcome, AugmentError> {
        let mut last = None;
        for target in self.pipeline.order() {
            let outcome = augment_failed(self, gen, problem, failed, target, iteration)?;
            if outcome.is_success() {
                return Ok(outcome);
            }
            last = Some(outcome);
        }
        Ok(last.expect("pipelines have at least one agent"))
    }
}

/// Feedback / regeneration loop for a single target agent.
///
/// Each feedback try costs one call; each regeneration try costs one call for
/// the target plus one per downstream agent. A verified success adds one
/// rephrase call and stops immediately.
pub fn augment_failed(
    aug: &Augmenter<'_>,
    gen: &Generator,
    problem: &ProblemInstance,
    failed: &Trajectory,
    target: &AgentId,
    iteration: u32,
) -> Result<AugmentOutcome, AugmentError> {
    aug.budgets.validate()?;
    let pipeline = aug.pipeline;
    pipeline.agent(target)?;
    let originals: BTreeMap<AgentId, String> = pipeline
        .order()
        .iter()
        .filter_map(|a| failed.step_of(a).map(|s| (a.clone(), s.output.clone())))
        .collect();
    let original_step = failed
        .step_of(target)
        .ok_or_else(|| AugmentError::MissingStep(target.clone()))?;

    for f in 1..=aug.budgets.max_f {
        let feedback = match generate_feedback(gen, aug.feedback, problem, &original_step.output) {
            Ok((_, fb)) => fb,
            Err(AugmentError::EmptyFeedback(agent)) => {
                tracing::info!(%agent, try_ = f, "empty feedback counts as a failed try");
                continue;
            }
            Err(e) => return Err(e),
        };
        for r in 1..=aug.budgets.max_re {
            let (_, regenerated) = regenerate_step(
                gen,
                pipeline,
                target,
                problem,
                &originals,
                &original_step.output,
                &feedback,
            )?;
            let prop = propagate_downstream(gen, pipeline, problem, target, &regenerated, &originals, iteration)?;
            if !is_correct(prop.final_answer.as_ref(), &problem.gold_answer, problem.task_kind) {
                continue;
            }
            let rephrased = rephrase(gen, aug.rephraser, problem, &regenerated)?;
            let note = AugmentationNote::new(target.clone(), feedback, regenerated, rephrased.clone(), (f, r));
            let target_spec = pipeline.agent(target)?;
            let mut steps = vec![augmented(
                StepRecord::direct(
                    target.clone(),
                    target_spec.system_prompt.clone(),
                    original_step.rendered_prompt.clone(),
                    rephrased,
                    iteration,
                ),
                &note,
            )];
            steps.extend(prop.steps.into_iter().map(|s| augmented(s, &note)));
            let rewards = steps.iter().map(|s| (s.agent_id.clone(), 1.0)).collect();
            let trajectory = Trajectory {
                problem_id: problem.problem_id.clone(),
                steps,
                final_answer: prop.final_answer,
                rewards,
                detail: TrajectoryDetail::Pipeline,
            };
            return Ok(AugmentOutcome::Success { note, trajectory });
        }
    }
    Ok(AugmentOutcome::Exhausted {
        target: target.clone(),
        attempts: (aug.budgets.max_f, aug.budgets.max_re),
    })
}
