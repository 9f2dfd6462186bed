use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentboot::experience::{
    export_dataset, export_pooled, library_stats, validate_chat_jsonl, ExperienceError, ExperienceLibrary, Setting,
};
use agentboot::games::{run_match, run_tournament, GameConfig, GameError, MatchResult, Player, PolicyEnv, PolicySpec};
use agentboot::model::AgentId;
use agentboot::train::{evaluate, load_problems, IterationReport, ModelRegistry, RunConfig, TrainError, Trainer, Workload};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "agentboot", version, about = "Self-improving multi-agent pipelines and negotiation games")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    /// One JSON object per line.
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run training iterations; `--out` is the run directory (default `run`).
    RunPipeline {
        /// Overrides the config iteration count.
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Play one game and print the transcript.
    PlayMatch {
        #[arg(long)]
        game: Option<String>,
        /// Policy for RED.
        #[arg(long, default_value = "scripted:propose-accept")]
        policy_a: PolicySpec,
        /// Policy for BLUE.
        #[arg(long, default_value = "scripted:accept2")]
        policy_b: PolicySpec,
    },
    /// Play a batch of games and write `tournament.csv` into `--out`.
    Tournament {
        #[arg(long)]
        game: Option<String>,
        #[arg(long, default_value_t = 10)]
        matches: usize,
        #[arg(long)]
        policy_a: PolicySpec,
        #[arg(long)]
        policy_b: PolicySpec,
    },
    /// Write chat datasets of a library iteration into `--out`.
    ExportDataset {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        iteration: u32,
        /// Only this agent.
        #[arg(long)]
        agent: Option<String>,
        /// One dataset with every agent's examples.
        #[arg(long)]
        pooled: bool,
    },
    /// Direct and augmented counts per agent and iteration.
    Stats {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        iteration: Option<u32>,
    },
    /// Score registry models on held-out tasks.
    Eval {
        /// Task file; defaults to the config's.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Registry file; without it the config's base models are used.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Registry iteration; defaults to the latest.
        #[arg(long)]
        iteration: Option<u32>,
        /// Must match the configured topology.
        #[arg(long)]
        setting: Option<EvalSetting>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalSetting {
    ProblemSolving,
    ActorCritic,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        match e {
            GameError::InvalidConfig(_) => Failure::Config(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<ExperienceError> for Failure {
    fn from(e: ExperienceError) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(msg.into()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::RunPipeline { iterations } => run_pipeline(g, *iterations),
        Command::PlayMatch {
            game,
            policy_a,
            policy_b,
        } => play_match(g, game.as_deref(), policy_a, policy_b),
        Command::Tournament {
            game,
            matches,
            policy_a,
            policy_b,
        } => tournament(g, game.as_deref(), *matches, policy_a, policy_b),
        Command::ExportDataset {
            library,
            iteration,
            agent,
            pooled,
        } => export(g, library, *iteration, agent.as_deref(), *pooled),
        Command::Stats { library, iteration } => stats(g, library, *iteration),
        Command::Eval {
            tasks,
            registry,
            iteration,
            setting,
        } => eval(g, tasks.as_deref(), registry.as_deref(), *iteration, *setting),
    }
}

fn load_config(g: &Global) -> Result<Option<RunConfig>, Failure> {
    let Some(path) = &g.config else {
        return Ok(None);
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(config_error("--workers must be at least 1"));
        }
        cfg.workers = w;
    }
    Ok(Some(cfg))
}

fn require_config(g: &Global) -> Result<RunConfig, Failure> {
    load_config(g)?.ok_or_else(|| config_error("this command needs --config"))
}

fn records<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, Failure> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(&r).context("serializing output")?);
        out.push('\n');
    }
    Ok(out)
}

fn run_pipeline(g: &Global, iterations: Option<u32>) -> Result<(), Failure> {
    let cfg = require_config(g)?;
    let t = iterations.unwrap_or(cfg.iterations);
    if t == 0 {
        return Err(config_error("--iterations must be at least 1"));
    }
    let run_dir = g.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let trainer = Trainer::from_config(&cfg, &run_dir)?;
    let reports = trainer.run(t).map_err(|e| {
        let hint = match &e {
            TrainError::FineTuneFailed { .. } | TrainError::Provider(_) => {
                format!("; datasets are kept, rerun the same command to resume from {}", run_dir.display())
            }
            _ => String::new(),
        };
        Failure::from(e).context_msg(hint)
    })?;
    if reports.is_empty() {
        eprintln!("registry in {} already covers {t} iterations", run_dir.display());
    }
    print!("{}", render_reports(&reports, g.format)?);
    Ok(())
}

impl Failure {
    fn context_msg(self, hint: String) -> Self {
        if hint.is_empty() {
            return self;
        }
        match self {
            Failure::Config(e) => Failure::Config(anyhow!("{e:#}{hint}")),
            Failure::Runtime(e) => Failure::Runtime(anyhow!("{e:#}{hint}")),
        }
    }
}

#[derive(Serialize)]
struct AgentRow<'a> {
    iteration: u32,
    agent: &'a AgentId,
    direct: usize,
    augmented: usize,
    unsolved: usize,
    examples: usize,
    model: &'a str,
}

fn agent_rows(reports: &[IterationReport]) -> Vec<AgentRow<'_>> {
    reports
        .iter()
        .flat_map(|r| {
            r.per_agent.iter().map(move |(agent, c)| AgentRow {
                iteration: r.iteration,
                agent,
                direct: c.direct,
                augmented: c.augmented,
                unsolved: c.unsolved,
                examples: c.examples,
                model: r.models.get(agent).map_or("", |m| m.model_name.as_str()),
            })
        })
        .collect()
}

fn render_reports(reports: &[IterationReport], format: Format) -> Result<String, Failure> {
    let rows = agent_rows(reports);
    Ok(match format {
        Format::Records => records(&rows)?,
        Format::Csv => csv_of(&rows)?,
        Format::Table => {
            let mut out = String::new();
            for r in reports {
                let _ = writeln!(
                    out,
                    "iteration {}: {} units, {} good on first sample",
                    r.iteration, r.units, r.first_attempt_good
                );
                let _ = writeln!(
                    out,
                    "  {:<16} {:>6} {:>9} {:>8} {:>8}  model",
                    "agent", "direct", "augmented", "unsolved", "examples"
                );
                for row in rows.iter().filter(|x| x.iteration == r.iteration) {
                    let _ = writeln!(
                        out,
                        "  {:<16} {:>6} {:>9} {:>8} {:>8}  {}",
                        row.agent.as_str(),
                        row.direct,
                        row.augmented,
                        row.unsolved,
                        row.examples,
                        row.model
                    );
                }
            }
            out
        }
    })
}

fn csv_of<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).context("writing csv")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("writing csv: {e}"))?;
    Ok(String::from_utf8(bytes).context("csv is utf-8")?)
}

fn game_config(name: Option<&str>, cfg: Option<&RunConfig>) -> Result<GameConfig, Failure> {
    let name = match (name, cfg.and_then(|c| c.game.as_ref())) {
        (Some(n), _) => n.to_string(),
        (None, Some(section)) => section.preset.clone(),
        (None, None) => return Err(config_error("name a game with --game")),
    };
    GameConfig::preset(&name).ok_or_else(|| config_error(format!("unknown game {name:?}")))
}

fn policy_env(cfg: Option<&RunConfig>, specs: &[&PolicySpec]) -> Result<PolicyEnv, Failure> {
    let mut env = PolicyEnv::default();
    if specs.iter().any(|s| matches!(s, PolicySpec::Llm(_))) {
        let cfg = cfg.ok_or_else(|| config_error("llm policies need --config for the model backend"))?;
        env.generator = Some(cfg.build_generator()?);
        env.model = Some(cfg.model.clone());
    }
    Ok(env)
}

fn play_match(g: &Global, game: Option<&str>, a: &PolicySpec, b: &PolicySpec) -> Result<(), Failure> {
    let cfg = load_config(g)?;
    let game = game_config(game, cfg.as_ref())?;
    let env = policy_env(cfg.as_ref(), &[a, b])?;
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let policy_err = |player: Player| move |source| Failure::from(GameError::Policy { player, source });
    let mut red = env.build(a, &game, Player::Red).map_err(policy_err(Player::Red))?;
    let mut blue = env.build(b, &game, Player::Blue).map_err(policy_err(Player::Blue))?;
    let result = run_match(&game, red.as_mut(), blue.as_mut(), seed)?;
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("match.json");
        let body = serde_json::to_vec_pretty(&result).context("serializing match")?;
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", render_match(&result, g.format)?);
    Ok(())
}

#[derive(Serialize)]
struct TurnRow<'a> {
    move_index: u32,
    player: Player,
    message: &'a str,
}

fn render_match(result: &MatchResult, format: Format) -> Result<String, Failure> {
    let rows: Vec<TurnRow<'_>> = result
        .transcript
        .iter()
        .map(|t| TurnRow {
            move_index: t.move_index,
            player: t.player,
            message: &t.raw,
        })
        .collect();
    Ok(match format {
        Format::Records => records([result])?,
        Format::Csv => csv_of(&rows)?,
        Format::Table => {
            let mut out = String::new();
            for r in &rows {
                let _ = writeln!(out, "--- move {} by {} ---\n{}", r.move_index, r.player, r.message.trim_end());
            }
            let _ = writeln!(out, "=== {} ended {:?} after {} moves ===", result.game, result.outcome, result.rounds);
            if let Some(p) = result.forfeited_by {
                let _ = writeln!(out, "{p} forfeited");
            }
            for (p, u) in &result.utilities {
                let _ = writeln!(out, "{p}: utility {u:.1}");
            }
            match result.winner {
                Some(p) => {
                    let _ = writeln!(out, "winner: {p}");
                }
                None => {
                    let _ = writeln!(out, "no winner");
                }
            }
            out
        }
    })
}

fn tournament(
    g: &Global,
    game: Option<&str>,
    matches: usize,
    a: &PolicySpec,
    b: &PolicySpec,
) -> Result<(), Failure> {
    if matches == 0 {
        return Err(config_error("--matches must be at least 1"));
    }
    let cfg = load_config(g)?;
    let game = game_config(game, cfg.as_ref())?;
    let env = policy_env(cfg.as_ref(), &[a, b])?;
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let table = run_tournament(&game, &[(a.clone(), b.clone())], matches, seed, &env)?;
    let csv = table.to_csv();
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("tournament.csv");
    std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    match g.format {
        Format::Table => print!("{table}"),
        Format::Csv => print!("{csv}"),
        Format::Records => print!("{}", records(&table.rows)?),
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn open_library(root: &Path) -> Result<ExperienceLibrary, Failure> {
    if !root.is_dir() {
        return Err(config_error(format!("no library at {}", root.display())));
    }
    Ok(ExperienceLibrary::load(root)?)
}

#[derive(Serialize)]
struct ExportRow {
    agent: String,
    path: PathBuf,
    records: usize,
}

fn export(g: &Global, library: &Path, iteration: u32, agent: Option<&str>, pooled: bool) -> Result<(), Failure> {
    let lib = open_library(library)?;
    let dir = g.out.clone().ok_or_else(|| config_error("export-dataset needs --out"))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut rows = Vec::new();
    if pooled {
        let path = dir.join("pooled.jsonl");
        export_pooled(&lib, iteration, &path)?;
        rows.push(ExportRow {
            agent: "pooled".into(),
            records: validate_chat_jsonl(&path).map_err(anyhow::Error::from)?,
            path,
        });
    } else {
        let agents = match agent {
            Some(a) => vec![AgentId::new(a)],
            None => lib.agents(iteration),
        };
        if agents.is_empty() {
            return Err(config_error(format!("iteration {iteration} has no data in {}", library.display())));
        }
        for a in agents {
            let path = dir.join(format!("{a}.jsonl"));
            export_dataset(&lib, iteration, &a, &path)?;
            rows.push(ExportRow {
                agent: a.to_string(),
                records: validate_chat_jsonl(&path).map_err(anyhow::Error::from)?,
                path,
            });
        }
    }
    match g.format {
        Format::Records => print!("{}", records(&rows)?),
        Format::Csv => print!("{}", csv_of(&rows)?),
        Format::Table => {
            for r in &rows {
                println!("{:<16} {:>6}  {}", r.agent, r.records, r.path.display());
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct StatsRow {
    iteration: u32,
    agent: String,
    direct: usize,
    augmented: usize,
    /// Percent; empty without direct data.
    augmentation_ratio: Option<f64>,
}

fn stats(g: &Global, library: &Path, iteration: Option<u32>) -> Result<(), Failure> {
    let lib = open_library(library)?;
    let iterations = match iteration {
        Some(t) => vec![t],
        None => lib.iterations(),
    };
    let mut rows = Vec::new();
    for t in iterations {
        for a in lib.agents(t) {
            let s = library_stats(&lib, t, &a);
            rows.push(StatsRow {
                iteration: t,
                agent: a.to_string(),
                direct: s.direct_count,
                augmented: s.augmented_count,
                augmentation_ratio: s.augmentation_ratio,
            });
        }
    }
    match g.format {
        Format::Records => print!("{}", records(&rows)?),
        Format::Csv => print!("{}", csv_of(&rows)?),
        Format::Table => {
            println!("{:>9} {:<16} {:>6} {:>9} {:>8}", "iteration", "agent", "direct", "augmented", "ratio");
            for r in &rows {
                let ratio = r.augmentation_ratio.map_or("n/a".to_string(), |x| format!("{x:.2}%"));
                println!(
                    "{:>9} {:<16} {:>6} {:>9} {:>8}",
                    r.iteration, r.agent, r.direct, r.augmented, ratio
                );
            }
        }
    }
    Ok(())
}

fn eval(
    g: &Global,
    tasks: Option<&Path>,
    registry: Option<&Path>,
    iteration: Option<u32>,
    setting: Option<EvalSetting>,
) -> Result<(), Failure> {
    let cfg = require_config(g)?;
    let configured = cfg.setting();
    let wanted = setting.map(|s| match s {
        EvalSetting::ProblemSolving => Setting::ProblemSolving,
        EvalSetting::ActorCritic => Setting::ActorCritic,
    });
    if configured == Setting::Competitive {
        return Err(config_error("eval scores task topologies; use tournament for games"));
    }
    if let Some(w) = wanted.filter(|w| *w != configured) {
        return Err(config_error(format!(
            "--setting {} does not match the configured topology ({})",
            w.name(),
            configured.name()
        )));
    }
    let path = tasks
        .map(Path::to_path_buf)
        .or_else(|| cfg.tasks.clone())
        .ok_or_else(|| config_error("eval needs --tasks or a config tasks file"))?;
    let problems = load_problems(&path)?;
    let mut workload = Workload::from_config(&cfg)?;
    if let Some(reg_path) = registry {
        let reg = ModelRegistry::load(reg_path)?;
        let t = iteration.unwrap_or(reg.latest());
        let models: BTreeMap<_, _> = reg
            .models(t)
            .ok_or_else(|| config_error(format!("registry has no iteration {t}")))?
            .clone();
        workload = workload.with_models(&models);
    } else if iteration.is_some() {
        return Err(config_error("--iteration needs --registry"));
    }
    let report = evaluate(&workload, &cfg.build_generator()?, &problems, cfg.workers)?;
    match g.format {
        Format::Table => print!("{report}"),
        Format::Records => print!("{}", records([report])?),
        Format::Csv => {
            let mut out = String::from("metric,value\n");
            for line in report.to_string().lines() {
                if let Some((k, v)) = line.split_once(' ') {
                    let _ = writeln!(out, "{},{v}", k.to_lowercase());
                }
            }
            print!("{out}");
        }
    }
    Ok(())
}
