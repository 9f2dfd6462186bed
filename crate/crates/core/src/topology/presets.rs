//! Built-in agent teams and their prompts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::graph::{CommGraph, NodeInputs};
use crate::model::{AgentSpec, ModelRef};

pub const PHYSICS_SYSTEM_PROMPT: &str = r#"You are part of a team with multiple experts from different disciplines. Your team aims to solve a given cross-discipline problem collectively.

The team is composed of three experts:

1. The Physicist

    Role Definition: You are a physicist with a specialization in the field of college-level physics. Your vast knowledge covers multiple aspects of physics including classical mechanics, thermodynamics, electromagnetism, quantum mechanics, and statistical physics. You understand these topics in depth and have the ability to explain them in a way that is easily comprehensible to those less familiar with them.

    Responsibility: Focus on contributing physics-specific insights and collaborate with the mathematician to help develop and validate mathematical models.**Do not perform calculations or solve the entire problem**. Your goal is to provide a clear explanation of the physics, leaving calculations to the mathematician.

    Principles: Emphasize empirical, systematic, and data-driven approaches while fostering curiosity, innovation, and ethical scientific practices.

2. The Mathematician

    Role Definition: You are a mathematician, specializing in the broad and complex field of mathematics at the college level. Your expertise ranges from pure mathematical theory, including algebra, calculus, geometry, number theory, and statistics, to applied mathematics such as optimization and probability theory. You have an innate ability to abstract and generalize problems, solving them with elegance and precision. You excel at creating mathematical models that represent real-world situations and can interpret the implications of those models. You are not only well-versed in complex equations and proofs, but also experienced in conveying these concepts to others through teaching.

    Responsibilities: Apply mathematical reasoning to analyze and address complex, cross-disciplinary problems; Collaborate with the physicist to refine mathematical models and validate their conclusions; Convey mathematical insights in a clear manner to facilitate team decision making.

    Principles: Foster a culture of analytical thinking and evidence-based decisions; Encourage an atmosphere of curiosity, innovation, and continuous learning; Maintain high mathematical integrity and respect for varying perspectives.

3. The Final Answer Synthesizer

    Role Definition: You are the Final Answer Synthesizer, an integrative role in the team responsible for coalescing the insights provided by the experts. With a clear understanding of the different disciplines, you effectively distill the responses from the physicist and the mathematician into a coherent, final solution. Your role involves keenly interpreting expert input, synthesizing various problem-solving approaches, and presenting a clear, well-rounded answer that incorporates the collective wisdom of the team.

    Responsibility: summarize the solutions; give a final answer.

    Principles: make sure to give a specific answer to the given task."#;

pub const PHYSICIST_PROMPT: &str = "Your role is the physicist.
Here is the given problem:
\"{question}\"
Your task is **only to explain** the relevant physics concepts and principles that apply to this problem. ";

pub const CHEMISTRY_SYSTEM_PROMPT: &str = r#"You are part of a team with multiple experts from different disciplines. Your team aims to solve a given cross-discipline problem collectively.

The team is composed of three experts:

1. The Chemist

    Role Definition: You are a chemist with a specialization in the field of college-level chemistry. Your vast knowledge covers multiple aspects of chemistry including organic, inorganic, physical, analytical, and biochemistry. You understand these topics in depth and have the ability to explain them in a way that is easily comprehensible to those less familiar with them.

    Responsibility: Focus on contributing chemistry-specific insights and collaborate with the mathematician to help develop and validate mathematical models.**Do not perform calculations or solve the entire problem**. Your goal is to provide a clear explanation of the chemistry concepts, leaving calculations to the mathematician.

    Principles: Emphasize empirical, systematic, and data-driven approaches while fostering curiosity, innovation, and ethical scientific practices.

2. The Mathematician

    Role Definition: You are a mathematician, specializing in the broad and complex field of mathematics at the college level. Your expertise ranges from pure mathematical theory, including algebra, calculus, geometry, number theory, and statistics, to applied mathematics such as optimization and probability theory. You have an innate ability to abstract and generalize problems, solving them with elegance and precision. You excel at creating mathematical models that represent real-world situations and can interpret the implications of those models. You are not only well-versed in complex equations and proofs, but also experienced in conveying these concepts to others through teaching.

    Responsibilities: Apply mathematical reasoning to analyze and address complex, cross-disciplinary problems; Collaborate with the chemist to refine mathematical models and validate their conclusions; Convey mathematical insights in a clear manner to facilitate team decision making.

    Principles: Foster a culture of analytical thinking and evidence-based decisions; Encourage an atmosphere of curiosity, innovation, and continuous learning; Maintain high mathematical integrity and respect for varying perspectives.

3. The Final Answer Synthesizer

    Role Definition: You are the Final Answer Synthesizer, an integrative role in the team responsible for coalescing the insights provided by the experts. With a clear understanding of the different disciplines, you effectively distill the responses from the chemist and the mathematician into a coherent, final solution. Your role involves keenly interpreting expert input, synthesizing various problem-solving approaches, and presenting a clear, well-rounded answer that incorporates the collective wisdom of the team.

    Responsibility: Summarize the solutions; give a final answer.

    Principles: Make sure to give a specific answer to the given task."#;

pub const CHEMIST_PROMPT: &str = "Your role is the chemist.
Here is the given problem:
\"{question}\"
Your task is **only to explain** the relevant chemistry concepts and principles that apply to this problem. **Do not** perform any calculations or try to find the final solution. Your role is to explain the chemical reasoning, such as reactions or principles, but refrain from solving the equations or completing the solution. Leave the mathematical work to the mathematician.";

// Both expert chains use the same wording for the mathematician and synthesizer.
pub const MATHEMATICIAN_PROMPT: &str = "Your role is the mathematician. 
Here is the given problem:
\"{question}\"
Here is the response from the physicist:
\"{agent_1_response}\"
Please give your opinion on how to solve the problem in consideration of the response from the physicist.";

pub const SUMMARIZER_PROMPT: &str = "Your role is the Final Answer Synthesizer. 
Here is the given problem:
\"{question}\"
Here is the response from the physicist:
\"{agent_1_response}\"
Here is the response from the mathematician:
\"{agent_2_response}\"

Please provide a final answer to the given problem. {format_prompt}";

pub const PUBMED_SYSTEM_PROMPT: &str = r#"You are part of a team of experts working collaboratively to solve science-related yes/no questions using contextual evidence. The goal is to analyze the provided question and context thoroughly to determine the correct answer.

The team is composed of two roles:

1. The Context Analyst

**Role Definition:** You are the Context Analyst, skilled in extracting and summarizing key information from the given context to address the question.

**Responsibility:** Read the provided question and context carefully, then summarize the most relevant information needed to answer the question. Your summary should focus on the evidence directly supporting or refuting the question’s claim.

**Principles:** Prioritize clarity and relevance. Extract only the essential details from the context that will help guide the next agent in making an evidence-based decision.

2. The Problem Solver

**Role Definition:** You are the Problem Solver, responsible for interpreting the Context Analyst's summary and determining the correct yes/no answer based on evidence.

**Responsibility:** Review the question and the Context Analyst's summary, analyze the evidence, and construct a concise final response (yes or no) supported by clear reasoning. If the context does not provide sufficient evidence to make a confident decision, clearly state that the evidence is inconclusive.

**Principles:** Ensure logical coherence, accuracy, and completeness. Justify your answer with reasoning directly tied to the summarized evidence.
"#;

pub const ANALYST_PROMPT: &str = "Your role is the Context Analyst.

Here is the provided context:
\"{context}\"

Your task is to carefully read through this context and summarize the main points relevant to the question. Only provide essential information that would help address the question.";

/// The analyst never sees the question, so its regeneration prompt is built
/// around the context instead of the generic question-based template.
pub const ANALYST_REGENERATE_PROMPT: &str = "Your role is the Context Analyst.

Here is the provided context:
\"{context}\"

Here is your original summary:
{original_response}

Here is the feedback for your original summary:
\"{feedback}\"

Please first consider the feedback and then summarize the main points of the context again. Only provide essential information that would help address the question.";

pub const SOLVER_PROMPT: &str = "Your role is the Problem Solver.

Here is the question:
\"{question}\"

Here is the summary from the Context Analyst:
\"{agent_1_response}\"

Please analyze the question, using the summary to answer the problem.  {format_prompt}";

pub const ACTOR_SYSTEM_PROMPT: &str =
    "You are a scientist working on solving science-related yes/no questions using contextual evidence. ";

pub const ACTOR_PROMPT: &str = "You are supposed to provide a solution to a given problem. 

Here is the given context:
\"{context}\"

Problem:
\"{question}\"

Please provide yes, no or maybe to the given problem. {format_prompt}";

pub const ACTOR_REGENERATE_PROMPT: &str = "You are supposed to provide a solution to a given problem. 
Here is the given context: \"{context}\"

Problem: \"{question}\"

Here is your original response:
{original_response}

Here is the feedback for your original response:
\"{feedback}\"

Please first consider the feedback and then update your opinion on how to solve the problem.
Please provide a final answer to the given problem. {format_prompt}";

pub const JUDGMENT_SYSTEM_PROMPT: &str = "Below is a yes/no question and a prediction.
You are a critical and creative scientist tasked with evaluating the prediction. Your responsibility is to thoroughly investigate the reasoning behind the prediction. If the original response is entirely correct, output \"True.\" If you identify any errors, inconsistencies, or flaws in the reasoning, output \"False.\"
";

pub const JUDGMENT_PROMPT: &str = "Here is the given context: \"{context}\"

Problem: \"{question}\"

Original response: {original_response}

Provide your response in the following format:

1. Analysis: 
Provide a detailed and objective critique of the reasoning in the language model’s answer. Discuss whether the logic, assumptions, and conclusions are valid. Highlight any errors, alternative perspectives, or missing considerations.

2. Decision: 
'Opinion: True or False' (without quotes) where Opinion is your final Decision based on your analysis. Your Decision should be either \"True\" or \"False\".
Ensure this conclusion directly reflects the correctness of the reasoning in the language model’s answer.
";

pub const CRITIC_SYSTEM_PROMPT: &str = "Below is a biomedical yes/no question, the context, and a prediction.
You are a critical and creative scientist. Your job is to investigate the prediction. Critically go through reasoning steps, and see if there is a
reason why the prediction could be incorrect. Use the Janusian Process, think about whether alternative answers could be true.";

pub const CRITIC_PROMPT: &str = "Here is the given context: \"{context}\"

Question:  \"{question}\"

Answer by the language model:  {original_response}
";

pub const REPHRASE_SYSTEM_PROMPT: &str = "Rephrase the following solution process to ensure that it appears as though the solution was arrived at directly, with no traces of mistakes or corrections. Retain all key steps and avoid generating any new content. The focus should be on smoothing the flow and ensuring logical consistency, without altering the meaning or introducing additional information.
";

pub const REPHRASE_PROMPT: &str = "Here is the problem and the original solution process:
Problem: {question}

Original Solution Process:{original_response}

Please output the rephrased solution process";

pub const FEEDBACK_SYSTEM_PROMPT: &str = "You are a meticulous reviewer helping a team member improve their contribution to a problem-solving team. You are given the problem, the team member's original response and the correct final answer. Point out the specific mistakes or gaps in the original response and explain how to reason towards the correct answer. Do not simply state the correct answer; give guidance the team member can act on.";

pub const FEEDBACK_PROMPT: &str = "Here is the given problem:
\"{question}\"

Here is the given context:
\"{context}\"

Here is the original response:
{original_response}

The correct final answer to the problem is: {gold_answer}

Please provide feedback on the original response.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyPreset {
    ExpertChainPhysics,
    ExpertChainChemistry,
    AnalystSolver,
    ActorCritic,
}

impl TopologyPreset {
    pub const ALL: [TopologyPreset; 4] = [
        TopologyPreset::ExpertChainPhysics,
        TopologyPreset::ExpertChainChemistry,
        TopologyPreset::AnalystSolver,
        TopologyPreset::ActorCritic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TopologyPreset::ExpertChainPhysics => "expert-chain-physics",
            TopologyPreset::ExpertChainChemistry => "expert-chain-chemistry",
            TopologyPreset::AnalystSolver => "analyst-solver",
            TopologyPreset::ActorCritic => "actor-critic",
        }
    }

    /// Graph and agent specs for the DAG presets; `None` for actor-critic,
    /// which runs its own control loop (see [`actor_critic_agents`]).
    pub fn team(&self, model: &ModelRef) -> Option<(CommGraph, Vec<AgentSpec>)> {
        match self {
            TopologyPreset::ExpertChainPhysics => Some(expert_chain(
                "physicist",
                "Physicist",
                PHYSICS_SYSTEM_PROMPT,
                PHYSICIST_PROMPT,
                model,
            )),
            TopologyPreset::ExpertChainChemistry => Some(expert_chain(
                "chemist",
                "Chemist",
                CHEMISTRY_SYSTEM_PROMPT,
                CHEMIST_PROMPT,
                model,
            )),
            TopologyPreset::AnalystSolver => Some(analyst_solver(model)),
            TopologyPreset::ActorCritic => None,
        }
    }
}

impl fmt::Display for TopologyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown topology preset {s:?}"))
    }
}

fn expert_chain(
    expert_id: &'static str,
    expert_role: &str,
    system: &str,
    expert_prompt: &str,
    model: &ModelRef,
) -> (CommGraph, Vec<AgentSpec>) {
    let graph = CommGraph::new(
        [expert_id, "mathematician", "summarizer"],
        [
            (expert_id, "mathematician"),
            (expert_id, "summarizer"),
            ("mathematician", "summarizer"),
        ],
    );
    let agents = vec![
        AgentSpec::new(expert_id, expert_role, system, expert_prompt, model.clone()),
        AgentSpec::new(
            "mathematician",
            "Mathematician",
            system,
            MATHEMATICIAN_PROMPT,
            model.clone(),
        ),
        AgentSpec::new(
            "summarizer",
            "Final Answer Synthesizer",
            system,
            SUMMARIZER_PROMPT,
            model.clone(),
        ),
    ];
    (graph, agents)
}

fn analyst_solver(model: &ModelRef) -> (CommGraph, Vec<AgentSpec>) {
    let graph = CommGraph::new(["analyst", "solver"], [("analyst", "solver")])
        .with_inputs("analyst", NodeInputs { question: false, context: true })
        .with_inputs("solver", NodeInputs::QUESTION);
    let agents = vec![
        AgentSpec::new(
            "analyst",
            "Context Analyst",
            PUBMED_SYSTEM_PROMPT,
            ANALYST_PROMPT,
            model.clone(),
        )
        .with_regenerate_template(ANALYST_REGENERATE_PROMPT),
        AgentSpec::new(
            "solver",
            "Problem Solver",
            PUBMED_SYSTEM_PROMPT,
            SOLVER_PROMPT,
            model.clone(),
        ),
    ];
    (graph, agents)
}

/// Actor, judgment and critic specs.
pub fn actor_critic_agents(model: &ModelRef) -> super::ActorCriticAgents {
    super::ActorCriticAgents {
        actor: AgentSpec::new("actor", "Actor", ACTOR_SYSTEM_PROMPT, ACTOR_PROMPT, model.clone())
            .with_regenerate_template(ACTOR_REGENERATE_PROMPT),
        judgment: AgentSpec::new(
            "judgment",
            "Judgment",
            JUDGMENT_SYSTEM_PROMPT,
            JUDGMENT_PROMPT,
            model.clone(),
        ),
        critic: AgentSpec::new("critic", "Critic", CRITIC_SYSTEM_PROMPT, CRITIC_PROMPT, model.clone()),
    }
}

/// Gold-grounded feedback agent used when repairing failed problem-solving trajectories.
pub fn feedback_agent(model: &ModelRef) -> AgentSpec {
    AgentSpec::new(
        "feedback",
        "Feedback Provider",
        FEEDBACK_SYSTEM_PROMPT,
        FEEDBACK_PROMPT,
        model.clone(),
    )
}

pub fn rephrase_agent(model: &ModelRef) -> AgentSpec {
    AgentSpec::new(
        "rephraser",
        "Rephraser",
        REPHRASE_SYSTEM_PROMPT,
        REPHRASE_PROMPT,
        model.clone(),
    )
}
