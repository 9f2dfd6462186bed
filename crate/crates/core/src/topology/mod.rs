//! Communication graphs, pipeline execution and the actor-critic loop.

mod actor_critic;
mod graph;
mod pipeline;
pub mod presets;

pub use actor_critic::{
    actor_prompt, actor_regenerate_prompt, critic_prompt, judgment_prompt, run_actor_critic,
    ActorCriticAgents, ActorCriticBudget, ActorCriticRun, ActorCriticTrace, CritiqueRound,
};
pub use graph::{validate_graph, CommGraph, GraphError, NodeInputs};
pub use pipeline::{execute_pipeline, Pipeline, PipelineError, ProblemInstance};
pub use presets::TopologyPreset;
