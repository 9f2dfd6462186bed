use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::finetune::{submit_finetune, FineTuneJob, FineTuneProvider, JobStatus};
use super::registry::ModelRegistry;
use super::tasks::load_problems;
use super::{write_atomic, TrainError};
use crate::augmentation::{augment_actor_critic, AugmentBudgets, AugmentOutcome, Augmenter};
use crate::experience::{
    dataset_file, export_pooled, filter_good, iteration_dir, score, ExperienceLibrary, LibraryStats, RewardConfig,
    Setting, TrainingExample, Trajectory,
};
use crate::games::{match_seed, match_trajectory, run_match, GameConfig, GameError, LlmPolicy, Player};
use crate::model::{AgentId, AgentSpec, Generator, ModelRef};
use crate::topology::presets::{actor_critic_agents, feedback_agent, rephrase_agent};
use crate::topology::{run_actor_critic, ActorCriticAgents, ActorCriticBudget, Pipeline, ProblemInstance};

const POOLED_AGENT: &str = "pooled";
const POOLED_FILE: &str = "pooled.jsonl";

/// What one iteration runs: a DAG pipeline, the actor-critic loop or self-play.
#[derive(Debug, Clone)]
pub enum Workload {
    Pipeline {
        pipeline: Pipeline,
        /// Gold-aware feedback agent; never fine-tuned.
        feedback: AgentSpec,
        rephraser: AgentSpec,
    },
    ActorCritic {
        agents: ActorCriticAgents,
        rephraser: AgentSpec,
        budget: ActorCriticBudget,
    },
    Game {
        cfg: GameConfig,
        matches: usize,
        /// RED's model then BLUE's.
        models: [ModelRef; 2],
    },
}

fn player_ids() -> [AgentId; 2] {
    [AgentId::new("player-red"), AgentId::new("player-blue")]
}

impl Workload {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, TrainError> {
        let model = &cfg.model;
        if let Some(game) = cfg.game_config() {
            let matches = cfg.game.as_ref().map_or(1, |g| g.matches);
            return Ok(Workload::Game {
                cfg: game,
                matches,
                models: [model.clone(), model.clone()],
            });
        }
        let preset = cfg
            .topology
            .ok_or_else(|| TrainError::InvalidConfig("no topology".into()))?;
        Ok(match preset.team(model) {
            Some((graph, agents)) => Workload::Pipeline {
                pipeline: Pipeline::new(graph, agents)?,
                feedback: feedback_agent(model),
                rephraser: rephrase_agent(model),
            },
            None => Workload::ActorCritic {
                agents: actor_critic_agents(model),
                rephraser: rephrase_agent(model),
                budget: ActorCriticBudget {
                    rounds: cfg.actor_critic_rounds,
                },
            },
        })
    }

    /// Trainable agents, in execution order.
    pub fn agents(&self) -> Vec<AgentId> {
        match self {
            Workload::Pipeline { pipeline, .. } => pipeline.order().to_vec(),
            Workload::ActorCritic { agents, .. } => agents.all().iter().map(|a| a.agent_id.clone()).collect(),
            Workload::Game { .. } => player_ids().to_vec(),
        }
    }

    pub fn setting(&self) -> Setting {
        match self {
            Workload::Pipeline { .. } => Setting::ProblemSolving,
            Workload::ActorCritic { .. } => Setting::ActorCritic,
            Workload::Game { .. } => Setting::Competitive,
        }
    }

    /// Current model of every trainable agent.
    pub fn models(&self) -> BTreeMap<AgentId, ModelRef> {
        match self {
            Workload::Pipeline { pipeline, .. } => pipeline
                .agents()
                .iter()
                .map(|(id, a)| (id.clone(), a.model_ref.clone()))
                .collect(),
            Workload::ActorCritic { agents, .. } => agents
                .all()
                .iter()
                .map(|a| (a.agent_id.clone(), a.model_ref.clone()))
                .collect(),
            Workload::Game { models, .. } => player_ids().into_iter().zip(models.iter().cloned()).collect(),
        }
    }

    /// Same workload with the trainable agents switched to `models`.
    /// Helper agents keep their models.
    pub fn with_models(&self, models: &BTreeMap<AgentId, ModelRef>) -> Self {
        match self {
            Workload::Pipeline {
                pipeline,
                feedback,
                rephraser,
            } => Workload::Pipeline {
                pipeline: pipeline.with_models(models),
                feedback: feedback.clone(),
                rephraser: rephraser.clone(),
            },
            Workload::ActorCritic {
                agents,
                rephraser,
                budget,
            } => {
                let mut agents = agents.clone();
                for a in agents.all_mut() {
                    if let Some(m) = models.get(&a.agent_id) {
                        a.model_ref = m.clone();
                    }
                }
                Workload::ActorCritic {
                    agents,
                    rephraser: rephraser.clone(),
                    budget: *budget,
                }
            }
            Workload::Game {
                cfg,
                matches,
                models: current,
            } => {
                let [red, blue] = player_ids();
                Workload::Game {
                    cfg: cfg.clone(),
                    matches: *matches,
                    models: [
                        models.get(&red).unwrap_or(&current[0]).clone(),
                        models.get(&blue).unwrap_or(&current[1]).clone(),
                    ],
                }
            }
        }
    }
}

/// How a problem (or match) ended up contributing to one agent's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemStatus {
    Direct,
    Augmented,
    Unsolved,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCounts {
    pub direct: usize,
    pub augmented: usize,
    pub unsolved: usize,
    /// Examples stored for the agent after deduplication.
    pub examples: usize,
}

impl AgentCounts {
    fn add(&mut self, s: ProblemStatus) {
        match s {
            ProblemStatus::Direct => self.direct += 1,
            ProblemStatus::Augmented => self.augmented += 1,
            ProblemStatus::Unsolved => self.unsolved += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    /// Problems, or matches for self-play.
    pub units: usize,
    /// Units whose first sample already produced good data.
    pub first_attempt_good: usize,
    pub per_agent: BTreeMap<AgentId, AgentCounts>,
    pub stats: BTreeMap<AgentId, LibraryStats>,
    #[serde(default)]
    pub jobs: Vec<FineTuneJob>,
    /// Registry entries written for this iteration.
    #[serde(default)]
    pub models: BTreeMap<AgentId, ModelRef>,
}

/// Written once an iteration's datasets are on disk, removed once its
/// registry entries are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: u32,
    pub report: IterationReport,
}

struct UnitOutcome {
    first_good: bool,
    status: BTreeMap<AgentId, ProblemStatus>,
    examples: Vec<TrainingExample>,
}

/// Drives iterations for one run directory:
///
/// ```text
/// run_dir/registry.json        model versions per completed iteration
/// run_dir/checkpoint.json      present between export and registry update
/// run_dir/library/iter_NNN/    per-agent datasets, records, notes, manifest
/// run_dir/reports/iter_NNN.json
/// ```
pub struct Trainer {
    workload: Workload,
    problems: Vec<ProblemInstance>,
    generator: Generator,
    provider: Arc<dyn FineTuneProvider>,
    reward: RewardConfig,
    budgets: AugmentBudgets,
    augment: bool,
    pooled: bool,
    workers: usize,
    seed: u64,
    run_dir: PathBuf,
    halt_after_export: bool,
}

impl Trainer {
    pub fn new(
        workload: Workload,
        problems: Vec<ProblemInstance>,
        generator: Generator,
        provider: Arc<dyn FineTuneProvider>,
        run_dir: impl Into<PathBuf>,
    ) -> Self {
        let reward = RewardConfig::for_setting(workload.setting());
        Self {
            workload,
            problems,
            generator,
            provider,
            reward,
            budgets: AugmentBudgets::default(),
            augment: true,
            pooled: false,
            workers: 4,
            seed: 0,
            run_dir: run_dir.into(),
            halt_after_export: false,
        }
    }

    pub fn from_config(cfg: &RunConfig, run_dir: impl Into<PathBuf>) -> Result<Self, TrainError> {
        let workload = Workload::from_config(cfg)?;
        let problems = match &cfg.tasks {
            Some(path) if cfg.game.is_none() => load_problems(path)?,
            _ => Vec::new(),
        };
        Ok(Self::new(workload, problems, cfg.build_generator()?, cfg.build_provider()?, run_dir)
            .with_reward(cfg.reward_config())
            .with_budgets(cfg.budgets)
            .with_augment(cfg.augment)
            .with_pooled(cfg.pooled)
            .with_workers(cfg.workers)
            .with_seed(cfg.seed))
    }

    pub fn with_reward(mut self, reward: RewardConfig) -> Self {
        self.reward = reward;
        self
    }

    pub fn with_budgets(mut self, budgets: AugmentBudgets) -> Self {
        self.budgets = budgets;
        self
    }

    pub fn with_augment(mut self, augment: bool) -> Self {
        self.augment = augment;
        self
    }

    pub fn with_pooled(mut self, pooled: bool) -> Self {
        self.pooled = pooled;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Stop with [`TrainError::Halted`] right after datasets are exported,
    /// as if the process had been killed there.
    pub fn with_halt_after_export(mut self, halt: bool) -> Self {
        self.halt_after_export = halt;
        self
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn problems(&self) -> &[ProblemInstance] {
        &self.problems
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn registry_path(&self) -> PathBuf {
        self.run_dir.join("registry.json")
    }

    pub fn library_root(&self) -> PathBuf {
        self.run_dir.join("library")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.run_dir.join("checkpoint.json")
    }

    pub fn report_path(&self, iteration: u32) -> PathBuf {
        self.run_dir.join("reports").join(format!("iter_{iteration:03}.json"))
    }

    /// Loads the run's registry, or starts one from the workload's base models.
    pub fn open_registry(&self) -> Result<ModelRegistry, TrainError> {
        let path = self.registry_path();
        if path.exists() {
            let reg = ModelRegistry::load(&path)?;
            if reg.agents() != self.workload.models().keys().cloned().collect::<Vec<_>>() {
                return Err(TrainError::Registry(format!(
                    "{} lists agents {:?}, this run trains {:?}",
                    path.display(),
                    reg.agents(),
                    self.workload.agents()
                )));
            }
            return Ok(reg);
        }
        let reg = ModelRegistry::new(self.workload.models());
        reg.save(&path)?;
        Ok(reg)
    }

    fn open_library(&self) -> Result<ExperienceLibrary, TrainError> {
        let root = self.library_root();
        if root.is_dir() {
            let lib = ExperienceLibrary::load(&root)?;
            if lib.epsilon() == self.reward.epsilon || lib.is_empty() {
                let mut fresh = ExperienceLibrary::new(self.reward.epsilon);
                fresh.extend(lib.iter().cloned())?;
                return Ok(fresh);
            }
            return Err(TrainError::InvalidConfig(format!(
                "library at {} uses epsilon {}, run uses {}",
                root.display(),
                lib.epsilon(),
                self.reward.epsilon
            )));
        }
        Ok(ExperienceLibrary::new(self.reward.epsilon))
    }

    fn read_checkpoint(&self) -> Result<Option<Checkpoint>, TrainError> {
        let path = self.checkpoint_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(TrainError::io(&path))?;
        serde_json::from_str(&text).map(Some).map_err(TrainError::json(&path))
    }

    /// Runs iterations after the registry's latest one, up to `iterations`.
    pub fn run(&self, iterations: u32) -> Result<Vec<IterationReport>, TrainError> {
        let mut registry = self.open_registry()?;
        let mut reports = Vec::new();
        for t in registry.latest() + 1..=iterations {
            reports.push(self.run_iteration(&mut registry, t)?);
        }
        Ok(reports)
    }

    /// One iteration: sample with the iteration t-1 models, score, filter,
    /// augment, export, fine-tune, then record iteration t in the registry.
    pub fn run_iteration(&self, registry: &mut ModelRegistry, t: u32) -> Result<IterationReport, TrainError> {
        if t == 0 || registry.latest() != t - 1 {
            return Err(TrainError::Registry(format!(
                "iteration {t} needs a registry complete through {}, have {}",
                t.saturating_sub(1),
                registry.latest()
            )));
        }
        let previous = registry.models(t - 1).expect("checked above").clone();
        let (lib, report) = match self.read_checkpoint()? {
            Some(cp) if cp.iteration == t => {
                tracing::info!(iteration = t, "resuming from exported checkpoint");
                (self.open_library()?, cp.report)
            }
            stale => {
                if stale.is_some() {
                    std::fs::remove_file(self.checkpoint_path()).map_err(TrainError::io(self.checkpoint_path()))?;
                }
                self.sample_and_export(&previous, t)?
            }
        };
        if self.halt_after_export {
            return Err(TrainError::Halted(t));
        }
        self.finetune_and_record(registry, &lib, report, &previous, t)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, TrainError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| TrainError::InvalidConfig(format!("worker pool: {e}")))
    }

    fn sample_and_export(
        &self,
        previous: &BTreeMap<AgentId, ModelRef>,
        t: u32,
    ) -> Result<(ExperienceLibrary, IterationReport), TrainError> {
        let workload = self.workload.with_models(previous);
        // Greedy decoding reproduces the same failure, so re-sampling only
        // helps when some model samples.
        let attempts = if previous.values().any(|m| m.decoding.temperature > 0.0) {
            self.budgets.max_sol
        } else {
            1
        };
        let units = match &workload {
            Workload::Game { matches, .. } => *matches,
            _ => self.problems.len(),
        };
        let outcomes: Vec<Result<UnitOutcome, TrainError>> = self
            .pool()?
            .install(|| (0..units).into_par_iter().map(|i| self.unit(&workload, i, t, attempts)).collect());

        let mut lib = self.open_library()?;
        lib.remove_iteration(t);
        let agents = workload.agents();
        let mut per_agent: BTreeMap<AgentId, AgentCounts> = agents.iter().map(|a| (a.clone(), AgentCounts::default())).collect();
        let mut first_attempt_good = 0;
        for outcome in outcomes {
            let o = outcome?;
            first_attempt_good += usize::from(o.first_good);
            for (agent, s) in &o.status {
                per_agent.entry(agent.clone()).or_default().add(*s);
            }
            lib.extend(o.examples)?;
        }
        for (agent, c) in per_agent.iter_mut() {
            c.examples = lib.examples(t, agent).len();
        }

        let root = self.library_root();
        let dir = iteration_dir(&root, t);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(TrainError::io(&dir))?;
        }
        lib.save(&root)?;
        if self.pooled {
            export_pooled(&lib, t, &dir.join(POOLED_FILE))?;
        }
        let report = IterationReport {
            iteration: t,
            units,
            first_attempt_good,
            stats: agents.iter().map(|a| (a.clone(), lib.stats(t, a))).collect(),
            per_agent,
            jobs: Vec::new(),
            models: BTreeMap::new(),
        };
        let cp = Checkpoint {
            iteration: t,
            report: report.clone(),
        };
        let path = self.checkpoint_path();
        write_atomic(&path, &serde_json::to_vec_pretty(&cp).map_err(TrainError::json(&path))?)?;
        Ok((lib, report))
    }

    fn finetune_and_record(
        &self,
        registry: &mut ModelRegistry,
        lib: &ExperienceLibrary,
        mut report: IterationReport,
        previous: &BTreeMap<AgentId, ModelRef>,
        t: u32,
    ) -> Result<IterationReport, TrainError> {
        let root = self.library_root();
        let agents = self.workload.agents();
        let mut jobs = Vec::new();
        if self.pooled {
            let path = iteration_dir(&root, t).join(POOLED_FILE);
            let any = agents.iter().any(|a| !lib.examples(t, a).is_empty());
            if any {
                jobs.push(FineTuneJob::new(POOLED_AGENT, path, previous[&agents[0]].clone()));
            }
        } else {
            for a in &agents {
                if lib.examples(t, a).is_empty() {
                    tracing::warn!(agent = %a, iteration = t, "no training data, keeping the previous model");
                    continue;
                }
                jobs.push(FineTuneJob::new(a.clone(), dataset_file(&root, t, a), previous[a].clone()));
            }
        }

        let provider = self.provider.as_ref();
        let results: Vec<Result<FineTuneJob, TrainError>> = self
            .pool()?
            .install(|| jobs.into_par_iter().map(|j| submit_finetune(provider, j)).collect());
        let mut done = Vec::with_capacity(results.len());
        for r in results {
            done.push(r?);
        }
        if let Some(failed) = done.iter().find(|j| j.status == JobStatus::Failed) {
            return Err(TrainError::FineTuneFailed {
                agent: failed.agent_id.clone(),
                message: failed.message.clone().unwrap_or_else(|| "no message".into()),
            });
        }

        let mut models = previous.clone();
        for job in &done {
            let m = job.resulting_model().expect("succeeded jobs carry a model");
            if self.pooled {
                models.values_mut().for_each(|v| *v = m.clone());
            } else {
                models.insert(job.agent_id.clone(), m);
            }
        }
        registry.record(t, models.clone())?;
        registry.save(&self.registry_path())?;
        report.jobs = done;
        report.models = models;
        let path = self.report_path(t);
        write_atomic(&path, &serde_json::to_vec_pretty(&report).map_err(TrainError::json(&path))?)?;
        let cp = self.checkpoint_path();
        if cp.exists() {
            std::fs::remove_file(&cp).map_err(TrainError::io(&cp))?;
        }
        Ok(report)
    }

    fn unit(&self, workload: &Workload, i: usize, t: u32, attempts: u32) -> Result<UnitOutcome, TrainError> {
        match workload {
            Workload::Pipeline {
                pipeline,
                feedback,
                rephraser,
            } => {
                let problem = &self.problems[i];
                let good = |tr: &Trajectory| tr.reward(pipeline.terminal()).unwrap_or(0.0) > self.reward.epsilon;
                let (trajs, first_good) = self.sample(attempts, good, || {
                    let mut tr = pipeline.execute(&self.generator, problem, t)?;
                    score(&mut tr, Some(problem), &self.reward)?;
                    Ok(tr)
                })?;
                let solved = trajs.last().is_some_and(good);
                let mut repaired = None;
                if !solved && self.augment {
                    let aug = Augmenter {
                        pipeline,
                        feedback,
                        rephraser,
                        budgets: self.budgets,
                    };
                    if let AugmentOutcome::Success { trajectory, .. } = aug.augment(&self.generator, problem, &trajs[0], t)? {
                        repaired = Some(trajectory);
                    }
                }
                Ok(self.collect(&workload.agents(), &trajs, repaired, first_good))
            }
            Workload::ActorCritic {
                agents,
                rephraser,
                budget,
            } => {
                let problem = &self.problems[i];
                let actor = agents.actor.agent_id.clone();
                let good = |tr: &Trajectory| tr.reward(&actor).unwrap_or(0.0) > self.reward.epsilon;
                let (trajs, first_good) = self.sample(attempts, good, || {
                    let mut tr = run_actor_critic(&self.generator, agents, problem, *budget, t)?.trajectory;
                    score(&mut tr, Some(problem), &self.reward)?;
                    Ok(tr)
                })?;
                let solved = trajs.last().is_some_and(good);
                let mut repaired = None;
                if !solved && self.augment {
                    let out = augment_actor_critic(&self.generator, agents, rephraser, problem, &trajs[0], self.budgets, t)?;
                    if let AugmentOutcome::Success { trajectory, .. } = out {
                        repaired = Some(trajectory);
                    }
                }
                Ok(self.collect(&workload.agents(), &trajs, repaired, first_good))
            }
            Workload::Game { cfg, models, .. } => {
                let ids = player_ids();
                let policy = |p: Player, k: usize| {
                    LlmPolicy::new(self.generator.clone(), ids[k].clone(), models[k].clone(), cfg, p)
                        .map_err(|source| TrainError::Game(GameError::Policy { player: p, source }))
                };
                let mut red = policy(Player::Red, 0)?;
                let mut blue = policy(Player::Blue, 1)?;
                let result = run_match(cfg, &mut red, &mut blue, match_seed(self.seed, t as usize, i))?;
                let mut tr = match_trajectory(&result, cfg, &ids, format!("match-{t:03}-{i:03}"), t);
                score(&mut tr, None, &self.reward)?;
                let any_good = ids.iter().any(|a| tr.reward(a).unwrap_or(0.0) > self.reward.epsilon);
                Ok(self.collect(&ids, &[tr], None, any_good))
            }
        }
    }

    /// Samples until `good` holds or `attempts` run out.
    fn sample(
        &self,
        attempts: u32,
        good: impl Fn(&Trajectory) -> bool,
        mut once: impl FnMut() -> Result<Trajectory, TrainError>,
    ) -> Result<(Vec<Trajectory>, bool), TrainError> {
        let mut trajs = Vec::new();
        for _ in 0..attempts.max(1) {
            let tr = once()?;
            let ok = good(&tr);
            trajs.push(tr);
            if ok {
                break;
            }
        }
        let first_good = good(&trajs[0]);
        Ok((trajs, first_good))
    }

    fn collect(
        &self,
        agents: &[AgentId],
        trajs: &[Trajectory],
        repaired: Option<Trajectory>,
        first_good: bool,
    ) -> UnitOutcome {
        let eps = self.reward.epsilon;
        let repaired: Vec<Trajectory> = repaired.into_iter().collect();
        let mut status = BTreeMap::new();
        let mut examples = Vec::new();
        for a in agents {
            let direct = filter_good(trajs, a, eps);
            let augmented = filter_good(&repaired, a, eps);
            let s = if !direct.is_empty() {
                ProblemStatus::Direct
            } else if !augmented.is_empty() {
                ProblemStatus::Augmented
            } else {
                ProblemStatus::Unsolved
            };
            status.insert(a.clone(), s);
            examples.extend(direct);
            examples.extend(augmented);
        }
        UnitOutcome {
            first_good,
            status,
            examples,
        }
    }
}

/// Runs iteration `t` of `trainer` against `registry`.
pub fn run_iteration(trainer: &Trainer, registry: &mut ModelRegistry, t: u32) -> Result<IterationReport, TrainError> {
    trainer.run_iteration(registry, t)
}
