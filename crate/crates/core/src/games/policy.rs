use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{GameConfig, Holdings};
use super::grammar::{Tag, TagMessage};
use super::prompts::{RESOURCE_EXCHANGE_SYSTEM_PROMPT, SELL_BUY_SYSTEM_PROMPT, ULTIMATUM_SYSTEM_PROMPT};
use super::state::{GameState, Move};
use super::trade::{render_trade, TradeProposal};
use super::{GameKind, Player};
use crate::model::{AgentId, AgentSpec, BackendError, Bindings, Generator, ModelRef, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("scripted policy ran out of responses")]
    Exhausted,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("policy {0} needs a generator")]
    NoGenerator(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// What a policy sees when asked to move.
#[derive(Debug, Clone, Copy)]
pub struct PlayerView<'a> {
    pub cfg: &'a GameConfig,
    pub player: Player,
    pub state: &'a GameState,
    /// 1-based attempt within this turn.
    pub attempt: u32,
    /// Why the previous attempt was refused.
    pub last_error: Option<&'a str>,
}

/// A raw response plus the (system, user) prompt that produced it, when a
/// model produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReply {
    pub raw: String,
    pub prompt: Option<(String, String)>,
}

impl PolicyReply {
    pub fn scripted(raw: String) -> Self {
        Self { raw, prompt: None }
    }
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called once before each match.
    fn reset(&mut self, _seed: u64) {}

    fn respond(&mut self, view: &PlayerView<'_>) -> Result<PolicyReply, PolicyError>;

    /// Agent id used when this policy's turns become training data.
    fn agent_id(&self) -> Option<&AgentId> {
        None
    }
}

pub fn render_holdings(h: &Holdings, cfg: &GameConfig) -> String {
    cfg.resources
        .iter()
        .map(|r| format!("{r}: {}", h.get(r).copied().unwrap_or(0)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn goals_text(cfg: &GameConfig, player: Player) -> String {
    match (cfg.kind, player) {
        (GameKind::ResourceExchange, _) => cfg
            .resources
            .iter()
            .map(|r| format!("{r}: {}", cfg.total(r) / 2))
            .collect::<Vec<_>>()
            .join(", "),
        (GameKind::SellBuy, Player::Red) => format!(
            "Sell resources for <{c}>. It costs {o}: {} {c} to produce the resources.",
            cfg.seller_cost,
            o = cfg.object(),
            c = cfg.currency()
        ),
        (GameKind::SellBuy, Player::Blue) => format!(
            "Buy resources with <{c}>. You are willing to pay at most {o}: {} {c} for the resources.",
            cfg.buyer_willingness,
            o = cfg.object(),
            c = cfg.currency()
        ),
        (GameKind::Ultimatum, _) => "Negotiate a split".into(),
    }
}

/// The game's system prompt filled in for `player`.
pub fn player_system_prompt(cfg: &GameConfig, player: Player) -> Result<String, PromptError> {
    let mine = render_holdings(cfg.initial_of(player), cfg);
    let b = Bindings::new()
        .set("my_resources", mine)
        .set("my_goals", goals_text(cfg, player))
        .set("my_name", format!("Player {}", player.name()))
        .set("proposal_limit", cfg.proposal_limit.to_string())
        .set("resource_names", cfg.resources.join(", "))
        .set("moves_each", cfg.moves_each().to_string())
        .set("total", cfg.total(&cfg.resources[0]).to_string());
    let template = match cfg.kind {
        GameKind::ResourceExchange => RESOURCE_EXCHANGE_SYSTEM_PROMPT,
        GameKind::Ultimatum => ULTIMATUM_SYSTEM_PROMPT,
        GameKind::SellBuy => SELL_BUY_SYSTEM_PROMPT,
    };
    b.render(template)
}

/// A fair-looking trade: resource exchange swaps 5 of each side's largest
/// holding, ultimatum splits evenly, sell-buy sells at the reference price.
pub fn default_proposal(cfg: &GameConfig, state: &GameState) -> TradeProposal {
    match cfg.kind {
        GameKind::ResourceExchange => {
            let mut t = TradeProposal::new();
            for p in Player::BOTH {
                if let Some((r, &held)) = state.holdings[&p].iter().max_by_key(|(_, a)| **a) {
                    t = t.give(p, r.clone(), held.min(5));
                }
            }
            t
        }
        GameKind::Ultimatum => {
            let r = &cfg.resources[0];
            TradeProposal::new()
                .give(Player::Red, r.clone(), cfg.total(r) / 2)
                .give(Player::Blue, r.clone(), 0)
        }
        GameKind::SellBuy => TradeProposal::new()
            .give(Player::Red, cfg.object(), state.held(Player::Red, cfg.object()))
            .give(Player::Blue, cfg.currency(), cfg.reference.max(0.0) as u64),
    }
}

/// Renders `mv` as a complete response for the player in `view`.
pub fn compose_message(view: &PlayerView<'_>, mv: &Move, message: &str) -> String {
    let (answer, trade) = match mv {
        Move::Accept => ("ACCEPT", None),
        Move::Reject => ("REJECT", None),
        Move::Pass => ("NONE", None),
        Move::Propose(t) if view.cfg.kind == GameKind::SellBuy => ("PROPOSAL", Some(t)),
        Move::Propose(t) => ("NONE", Some(t)),
    };
    let used = view.state.proposals[&view.player] + u32::from(trade.is_some());
    let mut m = TagMessage::new();
    for tag in Tag::contract(view.cfg.kind) {
        let content = match tag {
            Tag::MyName => format!("Player {}", view.player.name()),
            Tag::Move => format!("{} / {}", view.state.own_move_number(view.player), view.cfg.moves_each()),
            Tag::ProposalCount => used.to_string(),
            Tag::MyResources => render_holdings(&view.state.holdings[&view.player], view.cfg),
            Tag::MyGoals => goals_text(view.cfg, view.player),
            Tag::Reason => "scripted move".into(),
            Tag::PlayerAnswer => answer.into(),
            Tag::Message => message.into(),
            Tag::NewlyProposedTrade => render_trade(trade),
        };
        m = m.with(*tag, content);
    }
    m.render()
}

fn opponent_pending(view: &PlayerView<'_>) -> bool {
    matches!(&view.state.pending, Some((by, _)) if *by != view.player)
}

fn valid(view: &PlayerView<'_>, mv: &Move) -> bool {
    view.state.check(view.player, mv, view.cfg).is_ok()
}

/// Propose the default trade when allowed, else accept, pass or reject.
fn fallback(view: &PlayerView<'_>) -> Move {
    let propose = Move::Propose(default_proposal(view.cfg, view.state));
    [propose, Move::Accept, Move::Pass, Move::Reject]
        .into_iter()
        .find(|m| valid(view, m))
        .unwrap_or(Move::Reject)
}

#[derive(Debug, Clone, PartialEq)]
enum Script {
    /// Accept an opposing offer from the N-th own move on; before that, wait
    /// (or propose where waiting is not allowed).
    AcceptFrom(u32),
    ProposeAccept,
    NoneAlways,
    RejectAlways,
    Lines(VecDeque<String>),
}

/// Deterministic rule-based or replayed player.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    script: Script,
    label: String,
}

impl ScriptedPolicy {
    pub fn accept_on(n: u32) -> Self {
        Self {
            script: Script::AcceptFrom(n),
            label: format!("scripted:accept{n}"),
        }
    }

    pub fn propose_accept() -> Self {
        Self {
            script: Script::ProposeAccept,
            label: "scripted:propose-accept".into(),
        }
    }

    pub fn none() -> Self {
        Self {
            script: Script::NoneAlways,
            label: "scripted:none".into(),
        }
    }

    pub fn reject() -> Self {
        Self {
            script: Script::RejectAlways,
            label: "scripted:reject".into(),
        }
    }

    /// Replays raw responses in order, one per attempt.
    pub fn lines<S: Into<String>>(lines: impl IntoIterator<Item = S>) -> Self {
        Self {
            script: Script::Lines(lines.into_iter().map(Into::into).collect()),
            label: "scripted:lines".into(),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn respond(&mut self, view: &PlayerView<'_>) -> Result<PolicyReply, PolicyError> {
        let mv = match &mut self.script {
            Script::Lines(q) => return q.pop_front().map(PolicyReply::scripted).ok_or(PolicyError::Exhausted),
            Script::NoneAlways => Move::Pass,
            Script::RejectAlways => Move::Reject,
            Script::AcceptFrom(n) => {
                if view.state.own_move_number(view.player) >= *n && opponent_pending(view) {
                    Move::Accept
                } else if view.cfg.kind == GameKind::ResourceExchange {
                    Move::Pass
                } else {
                    fallback(view)
                }
            }
            Script::ProposeAccept => {
                if opponent_pending(view) {
                    Move::Accept
                } else {
                    fallback(view)
                }
            }
        };
        Ok(PolicyReply::scripted(compose_message(view, &mv, "")))
    }
}

/// Uniform over legal moves; proposals draw random affordable amounts.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn random_trade(&mut self, view: &PlayerView<'_>) -> TradeProposal {
        let cfg = view.cfg;
        let state = view.state;
        match cfg.kind {
            GameKind::SellBuy => {
                let budget = state.held(Player::Blue, cfg.currency());
                TradeProposal::new()
                    .give(Player::Red, cfg.object(), state.held(Player::Red, cfg.object()))
                    .give(Player::Blue, cfg.currency(), self.rng.gen_range(0..=budget))
            }
            _ => {
                let mut t = TradeProposal::new();
                for p in Player::BOTH {
                    for r in &cfg.resources {
                        let held = state.held(p, r);
                        t = t.give(p, r.clone(), self.rng.gen_range(0..=held));
                    }
                }
                t
            }
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn respond(&mut self, view: &PlayerView<'_>) -> Result<PolicyReply, PolicyError> {
        let propose = Move::Propose(self.random_trade(view));
        let options: Vec<Move> = [Move::Accept, Move::Pass, Move::Reject, propose]
            .into_iter()
            .filter(|m| valid(view, m))
            .collect();
        let mv = if options.is_empty() {
            Move::Reject
        } else {
            options[self.rng.gen_range(0..options.len())].clone()
        };
        Ok(PolicyReply::scripted(compose_message(view, &mv, "")))
    }
}

/// A language-model player. Each turn is a single prompt carrying the public
/// history of the match, so every (system, user, response) triple can be
/// reused verbatim as training data.
#[derive(Clone)]
pub struct LlmPolicy {
    generator: Generator,
    agent: AgentSpec,
}

impl fmt::Debug for LlmPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmPolicy").field("agent", &self.agent.agent_id).finish()
    }
}

impl LlmPolicy {
    pub fn new(
        generator: Generator,
        agent_id: impl Into<AgentId>,
        model: ModelRef,
        cfg: &GameConfig,
        player: Player,
    ) -> Result<Self, PolicyError> {
        let system = player_system_prompt(cfg, player)?;
        let agent = AgentSpec::new(agent_id, format!("Player {}", player.name()), system, "", model);
        Ok(Self { generator, agent })
    }

    pub fn agent(&self) -> &AgentSpec {
        &self.agent
    }

    pub fn turn_prompt(view: &PlayerView<'_>) -> String {
        let cfg = view.cfg;
        let state = view.state;
        let mut out = format!(
            "You are Player {}.\nThis is your move {} of {}. You have made {} of {} allowed proposals.\nYour current resources: {}\n\n",
            view.player.name(),
            state.own_move_number(view.player),
            cfg.moves_each(),
            state.proposals[&view.player],
            cfg.proposal_limit,
            render_holdings(&state.holdings[&view.player], cfg),
        );
        if state.transcript.is_empty() {
            out.push_str("You move first. There is no proposal on the table yet.\n");
        } else {
            out.push_str("Conversation so far:\n");
            for turn in &state.transcript {
                out.push_str(&format!("Player {}:\n", turn.player.name()));
                if let Some(m) = &turn.message {
                    for tag in [Tag::PlayerAnswer, Tag::Message, Tag::NewlyProposedTrade] {
                        if let Some(c) = m.get(tag) {
                            out.push_str(&format!("<{tag}> {c} </{tag}>\n"));
                        }
                    }
                }
            }
        }
        if let Some(err) = view.last_error {
            out.push_str(&format!(
                "\nYour previous response could not be used: {err}\nReply again with every required tag in the required order.\n"
            ));
        }
        out.push_str("\nWrite your response now.");
        out
    }
}

impl Policy for LlmPolicy {
    fn name(&self) -> String {
        format!("llm:{}", self.agent.model_ref.model_name)
    }

    fn respond(&mut self, view: &PlayerView<'_>) -> Result<PolicyReply, PolicyError> {
        let user = Self::turn_prompt(view);
        let raw = self.generator.ask(&self.agent, &user)?;
        Ok(PolicyReply {
            raw,
            prompt: Some((self.agent.system_prompt.clone(), user)),
        })
    }

    fn agent_id(&self) -> Option<&AgentId> {
        Some(&self.agent.agent_id)
    }
}

/// Policy names accepted on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    AcceptOn(u32),
    ProposeAccept,
    NoneAlways,
    RejectAlways,
    Random,
    Llm(String),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::AcceptOn(n) => write!(f, "scripted:accept{n}"),
            PolicySpec::ProposeAccept => f.write_str("scripted:propose-accept"),
            PolicySpec::NoneAlways => f.write_str("scripted:none"),
            PolicySpec::RejectAlways => f.write_str("scripted:reject"),
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::Llm(m) => write!(f, "llm:{m}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || PolicyError::UnknownPolicy(s.to_string());
        if s == "random" {
            return Ok(PolicySpec::Random);
        }
        if let Some(model) = s.strip_prefix("llm:") {
            return if model.is_empty() { Err(unknown()) } else { Ok(PolicySpec::Llm(model.into())) };
        }
        match s.strip_prefix("scripted:").ok_or_else(unknown)? {
            "propose-accept" => Ok(PolicySpec::ProposeAccept),
            "none" => Ok(PolicySpec::NoneAlways),
            "reject" => Ok(PolicySpec::RejectAlways),
            other => other
                .strip_prefix("accept")
                .and_then(|n| n.parse().ok())
                .filter(|n| *n >= 1)
                .map(PolicySpec::AcceptOn)
                .ok_or_else(unknown),
        }
    }
}

/// Everything needed to instantiate policies from specs.
#[derive(Clone, Default)]
pub struct PolicyEnv {
    pub generator: Option<Generator>,
    /// Template for `llm:` policies; its model name is replaced per spec.
    pub model: Option<ModelRef>,
}

impl PolicyEnv {
    pub fn build(&self, spec: &PolicySpec, cfg: &GameConfig, player: Player) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match spec {
            PolicySpec::AcceptOn(n) => Box::new(ScriptedPolicy::accept_on(*n)),
            PolicySpec::ProposeAccept => Box::new(ScriptedPolicy::propose_accept()),
            PolicySpec::NoneAlways => Box::new(ScriptedPolicy::none()),
            PolicySpec::RejectAlways => Box::new(ScriptedPolicy::reject()),
            PolicySpec::Random => Box::new(RandomPolicy::new(0)),
            PolicySpec::Llm(name) => {
                let gen = self
                    .generator
                    .clone()
                    .ok_or_else(|| PolicyError::NoGenerator(spec.to_string()))?;
                let model = self
                    .model
                    .clone()
                    .unwrap_or_else(|| ModelRef::remote(name.clone()))
                    .with_model_name(name.clone());
                let id = format!("player-{}", player.name().to_lowercase());
                Box::new(LlmPolicy::new(gen, id, model, cfg, player)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::grammar::parse_message;

    #[test]
    fn spec_parsing() {
        for s in ["scripted:accept2", "scripted:propose-accept", "scripted:none", "scripted:reject", "random", "llm:gpt"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        for bad in ["scripted:accept0", "scripted:acceptx", "llm:", "greedy"] {
            assert!(bad.parse::<PolicySpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn system_prompts_fill_every_placeholder() {
        for kind in GameKind::ALL {
            let cfg = kind.default_config();
            for p in Player::BOTH {
                let text = player_system_prompt(&cfg, p).unwrap();
                assert!(!text.contains("{my_"), "{kind} {p}");
            }
        }
        let re = player_system_prompt(&GameConfig::resource_exchange(), Player::Red).unwrap();
        assert!(re.contains("<my resources> X: 25, Y: 5 </my resources>"));
        assert!(re.contains("<my goals> X: 15, Y: 15 </my goals>"));
        assert!(re.contains("Your limit for proposals is 3."));
        let sb = player_system_prompt(&GameConfig::sell_buy_with(40, 70), Player::Blue).unwrap();
        assert!(sb.contains("You are willing to pay at most X: 70 ZUP for the resources."));
        assert!(sb.ends_with("You are Player BLUE."));
        let ul = player_system_prompt(&GameConfig::ultimatum(), Player::Red).unwrap();
        assert!(ul.contains("Player RED starts with Dollars: 100,"));
        assert!(ul.contains("on move 4/4"));
    }

    #[test]
    fn composed_messages_parse() {
        for kind in GameKind::ALL {
            let cfg = kind.default_config();
            let state = GameState::new(&cfg);
            let view = PlayerView { cfg: &cfg, player: Player::Red, state: &state, attempt: 1, last_error: None };
            let raw = compose_message(&view, &Move::Propose(default_proposal(&cfg, &state)), "hi");
            let m = parse_message(&raw, kind).unwrap();
            assert_eq!(Move::from_message(&m, &cfg).unwrap(), Move::Propose(default_proposal(&cfg, &state)));
        }
    }
}
