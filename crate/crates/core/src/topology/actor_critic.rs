//! Actor / judgment / critic control loop.
//!
//! The actor answers, the judgment agent classifies the answer, and when the
//! verdict is negative the critic writes feedback (without seeing the gold
//! answer) that the actor uses to regenerate. The gold answer is only ever
//! used afterwards, for scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pipeline::{PipelineError, ProblemInstance};
use crate::experience::{StepRecord, Trajectory, TrajectoryDetail};
use crate::model::{
    extract_final_answer, prompt, AgentSpec, Answer, Bindings, Generator, PromptError, TaskKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticAgents {
    pub actor: AgentSpec,
    pub judgment: AgentSpec,
    pub critic: AgentSpec,
}

impl ActorCriticAgents {
    pub fn all(&self) -> [&AgentSpec; 3] {
        [&self.actor, &self.judgment, &self.critic]
    }

    pub fn all_mut(&mut self) -> [&mut AgentSpec; 3] {
        [&mut self.actor, &mut self.judgment, &mut self.critic]
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for spec in self.all() {
            spec.validate()?;
            let templates = [spec.turn_template.as_str(), spec.regenerate_template()];
            if templates
                .iter()
                .any(|t| prompt::placeholders(t).iter().any(|p| p == prompt::GOLD_ANSWER))
            {
                return Err(PipelineError::FlowViolation {
                    agent: spec.agent_id.clone(),
                    placeholder: prompt::GOLD_ANSWER.into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorCriticBudget {
    /// Critique-and-regenerate rounds allowed after a negative verdict.
    pub rounds: u32,
}

impl Default for ActorCriticBudget {
    fn default() -> Self {
        Self { rounds: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueRound {
    pub feedback: String,
    pub regenerated_output: String,
    pub regenerated_answer: Option<Answer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticTrace {
    pub actor_output: String,
    pub actor_answer: Option<Answer>,
    pub judgment_output: String,
    /// Verdict on the initial answer; an unparsable judgment counts as false.
    pub judgment_verdict: bool,
    pub verdict_parsed: bool,
    pub rounds: Vec<CritiqueRound>,
    pub final_answer: Option<Answer>,
    pub events: Vec<String>,
}

impl ActorCriticTrace {
    pub fn critic_feedback(&self) -> Option<&str> {
        self.rounds.last().map(|r| r.feedback.as_str())
    }

    pub fn regenerated_answer(&self) -> Option<&Answer> {
        self.rounds.last().and_then(|r| r.regenerated_answer.as_ref())
    }

    pub fn regenerated(&self) -> bool {
        !self.rounds.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ActorCriticRun {
    pub trace: ActorCriticTrace,
    pub trajectory: Trajectory,
}

fn render(spec: &AgentSpec, template: &str, b: &Bindings) -> Result<String, PipelineError> {
    b.render(template).map_err(|source: PromptError| PipelineError::Prompt {
        agent: spec.agent_id.clone(),
        source,
    })
}

fn call(gen: &Generator, spec: &AgentSpec, user: &str) -> Result<String, PipelineError> {
    gen.ask(spec, user).map_err(|source| PipelineError::Backend {
        agent: spec.agent_id.clone(),
        source,
    })
}

fn problem_bindings(problem: &ProblemInstance) -> Bindings {
    Bindings::new()
        .set(prompt::QUESTION, problem.question.clone())
        .set(prompt::CONTEXT, problem.context_text())
}

pub fn actor_prompt(agents: &ActorCriticAgents, problem: &ProblemInstance) -> Result<String, PipelineError> {
    let b = problem_bindings(problem).set(prompt::FORMAT_PROMPT, problem.task_kind.format_prompt());
    render(&agents.actor, &agents.actor.turn_template, &b)
}

pub fn judgment_prompt(
    agents: &ActorCriticAgents,
    problem: &ProblemInstance,
    response: &str,
) -> Result<String, PipelineError> {
    let b = problem_bindings(problem).set(prompt::ORIGINAL_RESPONSE, response);
    render(&agents.judgment, &agents.judgment.turn_template, &b)
}

pub fn critic_prompt(
    agents: &ActorCriticAgents,
    problem: &ProblemInstance,
    response: &str,
) -> Result<String, PipelineError> {
    let b = problem_bindings(problem).set(prompt::ORIGINAL_RESPONSE, response);
    render(&agents.critic, &agents.critic.turn_template, &b)
}

pub fn actor_regenerate_prompt(
    agents: &ActorCriticAgents,
    problem: &ProblemInstance,
    response: &str,
    feedback: &str,
) -> Result<String, PipelineError> {
    let b = problem_bindings(problem)
        .set(prompt::ORIGINAL_RESPONSE, response)
        .set(prompt::FEEDBACK, feedback)
        .set(prompt::FORMAT_PROMPT, problem.task_kind.format_prompt());
    render(&agents.actor, agents.actor.regenerate_template(), &b)
}

fn answer_of(text: &str, kind: TaskKind) -> Option<Answer> {
    extract_final_answer(text, kind).ok()
}

/// Runs actor, judgment and (on a negative verdict) critic and regeneration rounds.
pub fn run_actor_critic(
    gen: &Generator,
    agents: &ActorCriticAgents,
    problem: &ProblemInstance,
    budget: ActorCriticBudget,
    iteration: u32,
) -> Result<ActorCriticRun, PipelineError> {
    agents.validate()?;
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let kind = problem.task_kind;

    let prompt = actor_prompt(agents, problem)?;
    let actor_output = call(gen, &agents.actor, &prompt)?;
    let actor_answer = answer_of(&actor_output, kind);
    steps.push(StepRecord::direct(
        agents.actor.agent_id.clone(),
        agents.actor.system_prompt.clone(),
        prompt,
        actor_output.clone(),
        iteration,
    ));

    let prompt = judgment_prompt(agents, problem, &actor_output)?;
    let judgment_output = call(gen, &agents.judgment, &prompt)?;
    let (judgment_verdict, verdict_parsed) = match extract_final_answer(&judgment_output, TaskKind::Judgment) {
        Ok(a) => (a.as_verdict().unwrap_or(false), true),
        Err(e) => {
            tracing::warn!(problem = %problem.problem_id, error = %e, "unparsable judgment, treating as negative");
            events.push(format!("unparsable judgment treated as False: {e}"));
            (false, false)
        }
    };
    steps.push(StepRecord::direct(
        agents.judgment.agent_id.clone(),
        agents.judgment.system_prompt.clone(),
        prompt,
        judgment_output.clone(),
        iteration,
    ));

    let mut rounds = Vec::new();
    let mut latest_output = actor_output.clone();
    let mut latest_answer = actor_answer.clone();
    let mut verdict = judgment_verdict;
    let mut actor_step = 0;
    for round in 0..budget.rounds {
        if verdict {
            break;
        }
        let prompt = critic_prompt(agents, problem, &latest_output)?;
        let feedback = call(gen, &agents.critic, &prompt)?;
        steps.push(StepRecord::direct(
            agents.critic.agent_id.clone(),
            agents.critic.system_prompt.clone(),
            prompt,
            feedback.clone(),
            iteration,
        ));

        let prompt = actor_regenerate_prompt(agents, problem, &latest_output, &feedback)?;
        let regenerated = call(gen, &agents.actor, &prompt)?;
        steps[actor_step].superseded = true;
        actor_step = steps.len();
        steps.push(StepRecord::direct(
            agents.actor.agent_id.clone(),
            agents.actor.system_prompt.clone(),
            prompt,
            regenerated.clone(),
            iteration,
        ));
        let regenerated_answer = answer_of(&regenerated, kind);
        rounds.push(CritiqueRound {
            feedback,
            regenerated_output: regenerated.clone(),
            regenerated_answer: regenerated_answer.clone(),
        });
        latest_output = regenerated;
        latest_answer = regenerated_answer;

        if round + 1 < budget.rounds {
            let prompt = judgment_prompt(agents, problem, &latest_output)?;
            let out = call(gen, &agents.judgment, &prompt)?;
            verdict = extract_final_answer(&out, TaskKind::Judgment)
                .ok()
                .and_then(|a| a.as_verdict())
                .unwrap_or(false);
            let mut step = StepRecord::direct(
                agents.judgment.agent_id.clone(),
                agents.judgment.system_prompt.clone(),
                prompt,
                out,
                iteration,
            );
            // Only the verdict on the initial answer is scored.
            step.superseded = true;
            steps.push(step);
        }
    }

    let regenerated = !rounds.is_empty();
    let trace = ActorCriticTrace {
        actor_output,
        actor_answer: actor_answer.clone(),
        judgment_output,
        judgment_verdict,
        verdict_parsed,
        rounds,
        final_answer: latest_answer.clone(),
        events,
    };
    let trajectory = Trajectory {
        problem_id: problem.problem_id.clone(),
        steps,
        final_answer: latest_answer,
        rewards: BTreeMap::new(),
        detail: TrajectoryDetail::ActorCritic {
            actor: agents.actor.agent_id.clone(),
            judgment: agents.judgment.agent_id.clone(),
            critic: agents.critic.agent_id.clone(),
            initial_answer: actor_answer,
            verdict: judgment_verdict,
            verdict_parsed,
            regenerated,
            regenerated_answer: trace.regenerated_answer().cloned(),
        },
    };
    Ok(ActorCriticRun { trace, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelRef, ScriptedBackend};
    use crate::topology::presets::actor_critic_agents;

    fn problem() -> ProblemInstance {
        ProblemInstance::new("pm1", "Does X cause Y?", "GOLDSENTINEL", TaskKind::YesNoMaybe)
            .with_context("cohort of 40 patients")
    }

    fn gen(pairs: &[(&str, &str)]) -> Generator {
        Generator::new().with_scripted(ScriptedBackend::from_pairs(pairs.iter().copied()))
    }

    #[test]
    fn negative_verdict_triggers_critique_and_regeneration() {
        let agents = actor_critic_agents(&ModelRef::scripted("base"));
        let g = gen(&[
            ("actor", "Answer: no"),
            ("judgment", "Opinion: False"),
            ("critic", "check cohort size"),
            ("actor", "Answer: yes"),
        ]);
        let p = ProblemInstance { gold_answer: "yes".into(), ..problem() };
        let run = run_actor_critic(&g, &agents, &p, ActorCriticBudget::default(), 0).unwrap();
        assert_eq!(run.trace.final_answer, Some(Answer::Token("yes".into())));
        assert_eq!(run.trace.critic_feedback(), Some("check cohort size"));
        assert_eq!(run.trace.regenerated_answer(), Some(&Answer::Token("yes".into())));
        let regen_prompt = &run.trajectory.steps[3].rendered_prompt;
        assert!(regen_prompt.contains("check cohort size"));
        assert!(regen_prompt.contains("Answer: no"));
        assert!(run.trajectory.steps[0].superseded);
        assert!(!run.trajectory.steps[3].superseded);
    }

    #[test]
    fn positive_verdict_short_circuits() {
        let agents = actor_critic_agents(&ModelRef::scripted("base"));
        let g = gen(&[("actor", "Answer: yes"), ("judgment", "Opinion: True")]);
        let run = run_actor_critic(&g, &agents, &problem(), ActorCriticBudget::default(), 0).unwrap();
        assert_eq!(run.trace.final_answer, Some(Answer::Token("yes".into())));
        assert!(run.trace.critic_feedback().is_none());
        assert_eq!(g.log().len(), 2);
    }

    #[test]
    fn garbage_judgment_takes_critique_path() {
        let agents = actor_critic_agents(&ModelRef::scripted("base"));
        let g = gen(&[
            ("actor", "Answer: yes"),
            ("judgment", "I am not sure what to say"),
            ("critic", "consider maybe"),
            ("actor", "Answer: maybe"),
        ]);
        let run = run_actor_critic(&g, &agents, &problem(), ActorCriticBudget::default(), 0).unwrap();
        assert!(!run.trace.verdict_parsed);
        assert!(!run.trace.judgment_verdict);
        assert_eq!(run.trace.events.len(), 1);
        assert!(run.trace.regenerated());
    }

    #[test]
    fn critic_never_sees_gold() {
        let agents = actor_critic_agents(&ModelRef::scripted("base"));
        let g = gen(&[
            ("actor", "Answer: no"),
            ("judgment", "Opinion: False"),
            ("critic", "hmm"),
            ("actor", "Answer: yes"),
        ]);
        run_actor_critic(&g, &agents, &problem(), ActorCriticBudget::default(), 0).unwrap();
        for rec in g.log().snapshot() {
            assert!(!rec.prompt_text().contains("GOLDSENTINEL"), "{}", rec.agent_id);
        }
    }

    #[test]
    fn multiple_rounds_rejudge_between_rounds() {
        let agents = actor_critic_agents(&ModelRef::scripted("base"));
        let g = gen(&[
            ("actor", "Answer: no"),
            ("judgment", "Opinion: False"),
            ("critic", "f1"),
            ("actor", "Answer: maybe"),
            ("judgment", "Opinion: True"),
        ]);
        let run = run_actor_critic(&g, &agents, &problem(), ActorCriticBudget { rounds: 3 }, 0).unwrap();
        assert_eq!(run.trace.rounds.len(), 1);
        assert_eq!(run.trace.final_answer, Some(Answer::Token("maybe".into())));
        assert!(!run.trace.judgment_verdict);
    }
}
