use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::{CommGraph, GraphError};
use crate::experience::{StepRecord, Trajectory, TrajectoryDetail};
use crate::model::{
    extract_final_answer, prompt, AgentId, AgentSpec, AgentSpecError, BackendError, Bindings,
    Generator, ModelRef, PromptError, TaskKind,
};

/// One problem with its reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(rename = "id")]
    pub problem_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(rename = "gold")]
    pub gold_answer: String,
    pub task_kind: TaskKind,
}

impl ProblemInstance {
    pub fn new(
        problem_id: impl Into<String>,
        question: impl Into<String>,
        gold_answer: impl Into<String>,
        task_kind: TaskKind,
    ) -> Self {
        Self {
            problem_id: problem_id.into(),
            question: question.into(),
            context: None,
            gold_answer: gold_answer.into(),
            task_kind,
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn context_text(&self) -> &str {
        self.context.as_deref().unwrap_or("")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spec(#[from] AgentSpecError),
    #[error("no agent spec for node {0}")]
    MissingAgentSpec(AgentId),
    #[error("agent spec {0} has no node in the graph")]
    UnexpectedAgentSpec(AgentId),
    #[error("graph must have exactly one terminal agent, found {0:?}")]
    TerminalCount(Vec<AgentId>),
    #[error("agent {agent}: template input {{{placeholder}}} is not allowed by the graph")]
    FlowViolation { agent: AgentId, placeholder: String },
    #[error("agent {agent}: template never reads the output of predecessor {predecessor}")]
    UnreadPredecessor { agent: AgentId, predecessor: AgentId },
    #[error("agent {agent}: {source}")]
    Prompt {
        agent: AgentId,
        #[source]
        source: PromptError,
    },
    #[error("agent {agent}: {source}")]
    Backend {
        agent: AgentId,
        #[source]
        source: BackendError,
    },
}

/// A validated graph together with the agents that occupy its nodes.
#[derive(Debug, Clone)]
pub struct Pipeline {
    graph: CommGraph,
    agents: BTreeMap<AgentId, AgentSpec>,
    order: Vec<AgentId>,
    terminal: AgentId,
}

impl Pipeline {
    pub fn new(
        graph: CommGraph,
        agents: impl IntoIterator<Item = AgentSpec>,
    ) -> Result<Self, PipelineError> {
        let order = graph.topological_order()?;
        let agents: BTreeMap<AgentId, AgentSpec> = agents
            .into_iter()
            .map(|a| (a.agent_id.clone(), a))
            .collect();
        for n in &graph.nodes {
            if !agents.contains_key(n) {
                return Err(PipelineError::MissingAgentSpec(n.clone()));
            }
        }
        if let Some(extra) = agents.keys().find(|a| !graph.contains(a)) {
            return Err(PipelineError::UnexpectedAgentSpec(extra.clone()));
        }
        let sinks = graph.sinks();
        if sinks.len() != 1 {
            return Err(PipelineError::TerminalCount(sinks));
        }
        let terminal = sinks[0].clone();
        let pipeline = Self {
            graph,
            agents,
            order,
            terminal,
        };
        for spec in pipeline.agents.values() {
            spec.validate()?;
            pipeline.check_flow(spec)?;
        }
        Ok(pipeline)
    }

    /// Templates may only read what the graph grants: granted problem inputs
    /// and the outputs of predecessors, all of which must be read.
    fn check_flow(&self, spec: &AgentSpec) -> Result<(), PipelineError> {
        let id = &spec.agent_id;
        let preds = self.graph.predecessors(id)?;
        let allowed_agents: BTreeSet<usize> = preds
            .iter()
            .filter_map(|p| self.graph.position(p))
            .collect();
        let inputs = self.graph.inputs_of(id);
        let violation = |placeholder: &str| PipelineError::FlowViolation {
            agent: id.clone(),
            placeholder: placeholder.to_string(),
        };

        let granted = |name: &str| match name {
            prompt::QUESTION => inputs.question,
            prompt::CONTEXT => inputs.context,
            prompt::FORMAT_PROMPT => true,
            other => prompt::parse_agent_response_key(other)
                .is_some_and(|k| allowed_agents.contains(&k)),
        };
        let turn = prompt::placeholders(&spec.turn_template);
        if let Some(name) = turn.iter().find(|n| !granted(n)) {
            return Err(violation(name));
        }
        for p in &preds {
            let key = prompt::agent_response_key(self.graph.position(p).expect("validated"));
            if !turn.contains(&key) {
                return Err(PipelineError::UnreadPredecessor {
                    agent: id.clone(),
                    predecessor: p.clone(),
                });
            }
        }
        // The regenerating agent sees its own inputs plus its old output and
        // the feedback, never the gold answer.
        let regen = prompt::placeholders(spec.regenerate_template());
        if let Some(name) = regen.iter().find(|n| {
            !(granted(n) || *n == prompt::ORIGINAL_RESPONSE || *n == prompt::FEEDBACK)
        }) {
            return Err(violation(name));
        }
        Ok(())
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn agents(&self) -> &BTreeMap<AgentId, AgentSpec> {
        &self.agents
    }

    pub fn agent(&self, id: &AgentId) -> Result<&AgentSpec, PipelineError> {
        self.agents
            .get(id)
            .ok_or_else(|| GraphError::UnknownAgent(id.clone()).into())
    }

    pub fn order(&self) -> &[AgentId] {
        &self.order
    }

    pub fn terminal(&self) -> &AgentId {
        &self.terminal
    }

    /// Copy with each agent's model replaced by `models[agent]` where present.
    pub fn with_models(&self, models: &BTreeMap<AgentId, ModelRef>) -> Self {
        let mut next = self.clone();
        for (id, spec) in next.agents.iter_mut() {
            if let Some(m) = models.get(id) {
                spec.model_ref = m.clone();
            }
        }
        next
    }

    /// Problem-level bindings for `agent`: granted inputs and the answer format.
    pub fn base_bindings(&self, agent: &AgentId, problem: &ProblemInstance) -> Bindings {
        let inputs = self.graph.inputs_of(agent);
        let mut b = Bindings::new();
        if inputs.question {
            b.insert(prompt::QUESTION, problem.question.clone());
        }
        if inputs.context {
            b.insert(prompt::CONTEXT, problem.context_text());
        }
        let format = if agent == &self.terminal {
            problem.task_kind.format_prompt()
        } else {
            ""
        };
        b.insert(prompt::FORMAT_PROMPT, format);
        b
    }

    /// Renders `agent`'s turn prompt from the problem and the outputs of its predecessors.
    pub fn render_turn(
        &self,
        agent: &AgentId,
        problem: &ProblemInstance,
        outputs: &BTreeMap<AgentId, String>,
    ) -> Result<String, PipelineError> {
        let spec = self.agent(agent)?;
        let mut b = self.base_bindings(agent, problem);
        for p in self.graph.predecessors(agent)? {
            let k = self.graph.position(&p).expect("validated");
            let out = outputs
                .get(&p)
                .ok_or_else(|| PipelineError::Prompt {
                    agent: agent.clone(),
                    source: PromptError::MissingPlaceholder(prompt::agent_response_key(k)),
                })?;
            b.insert(prompt::agent_response_key(k), out.clone());
        }
        b.render(&spec.turn_template)
            .map_err(|source| PipelineError::Prompt {
                agent: agent.clone(),
                source,
            })
    }

    /// Prompt asking `agent` to redo its step given its earlier output and feedback.
    pub fn render_regenerate(
        &self,
        agent: &AgentId,
        problem: &ProblemInstance,
        outputs: &BTreeMap<AgentId, String>,
        original: &str,
        feedback: &str,
    ) -> Result<String, PipelineError> {
        let spec = self.agent(agent)?;
        let mut b = self.base_bindings(agent, problem);
        for p in self.graph.predecessors(agent)? {
            if let Some(out) = outputs.get(&p) {
                let k = self.graph.position(&p).expect("validated");
                b.insert(prompt::agent_response_key(k), out.clone());
            }
        }
        b.insert(prompt::ORIGINAL_RESPONSE, original);
        b.insert(prompt::FEEDBACK, feedback);
        b.render(spec.regenerate_template())
            .map_err(|source| PipelineError::Prompt {
                agent: agent.clone(),
                source,
            })
    }

    /// Runs every agent once in topological order.
    pub fn execute(
        &self,
        generator: &Generator,
        problem: &ProblemInstance,
        iteration: u32,
    ) -> Result<Trajectory, PipelineError> {
        let mut outputs = BTreeMap::new();
        let mut steps = Vec::with_capacity(self.order.len());
        for id in &self.order {
            let spec = &self.agents[id];
            let rendered = self.render_turn(id, problem, &outputs)?;
            let output = generator
                .ask(spec, &rendered)
                .map_err(|source| PipelineError::Backend {
                    agent: id.clone(),
                    source,
                })?;
            steps.push(StepRecord::direct(
                id.clone(),
                spec.system_prompt.clone(),
                rendered,
                output.clone(),
                iteration,
            ));
            outputs.insert(id.clone(), output);
        }
        let final_answer = match extract_final_answer(&outputs[&self.terminal], problem.task_kind) {
            Ok(a) => Some(a),
            Err(e) => {
                tracing::info!(problem = %problem.problem_id, error = %e, "terminal agent gave no answer");
                None
            }
        };
        Ok(Trajectory {
            problem_id: problem.problem_id.clone(),
            steps,
            final_answer,
            rewards: BTreeMap::new(),
            detail: TrajectoryDetail::Pipeline,
        })
    }
}

/// Validates the graph and agents, then runs one problem through them.
pub fn execute_pipeline(
    generator: &Generator,
    graph: &CommGraph,
    agents: &BTreeMap<AgentId, AgentSpec>,
    problem: &ProblemInstance,
) -> Result<Trajectory, PipelineError> {
    Pipeline::new(graph.clone(), agents.values().cloned())?.execute(generator, problem, 0)
}
