use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{GameConfig, Holdings};
use super::grammar::parse_message;
use super::policy::{Policy, PlayerView};
use super::state::{GameState, Move, Outcome, TurnRecord};
use super::{GameError, GameKind, Player};
use crate::experience::{StepRecord, Trajectory, TrajectoryDetail};
use crate::model::AgentId;

/// Responses a player may send per turn before forfeiting.
pub const MAX_ATTEMPTS: u32 = 3;

/// Final utility of `player`.
///
/// Resource exchange counts everything held. Ultimatum measures the split
/// against the reference point once the game was decided, and sell-buy
/// measures the price against it (seller gains above, buyer below). A game
/// without a deal is worth 0 in those two.
pub fn utility(cfg: &GameConfig, outcome: Outcome, holdings: &BTreeMap<Player, Holdings>, player: Player) -> f64 {
    let held = |p: Player, r: &str| holdings[&p].get(r).copied().unwrap_or(0) as f64;
    match cfg.kind {
        GameKind::ResourceExchange => holdings[&player].values().sum::<u64>() as f64,
        GameKind::Ultimatum => match outcome {
            Outcome::Accepted | Outcome::Rejected => held(player, &cfg.resources[0]) - cfg.reference,
            Outcome::NoDeal => 0.0,
        },
        GameKind::SellBuy => match outcome {
            Outcome::Accepted => {
                let price = held(Player::Red, cfg.currency()) - cfg.initial_of(Player::Red).get(cfg.currency()).copied().unwrap_or(0) as f64;
                match player {
                    Player::Red => price - cfg.reference,
                    Player::Blue => cfg.reference - price,
                }
            }
            Outcome::Rejected | Outcome::NoDeal => 0.0,
        },
    }
}

/// One response requested from a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCall {
    pub player: Player,
    pub move_index: u32,
    pub attempt: u32,
    pub system: Option<String>,
    pub user: Option<String>,
    pub raw: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub game: GameKind,
    pub outcome: Outcome,
    pub forfeited_by: Option<Player>,
    pub final_holdings: BTreeMap<Player, Holdings>,
    pub utilities: BTreeMap<Player, f64>,
    /// Strictly higher utility; `None` on a tie.
    pub winner: Option<Player>,
    /// Moves applied.
    pub rounds: u32,
    pub transcript: Vec<TurnRecord>,
    pub calls: Vec<PolicyCall>,
}

impl MatchResult {
    pub fn utility(&self, p: Player) -> f64 {
        self.utilities[&p]
    }
}

fn player_seed(seed: u64, p: Player) -> u64 {
    match p {
        Player::Red => seed,
        Player::Blue => seed.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15,
    }
}

/// Plays one match to completion. Each turn the mover gets up to
/// [`MAX_ATTEMPTS`] tries to produce a parsable, legal response; after that
/// it forfeits and the game ends as a rejection.
pub fn run_match(
    cfg: &GameConfig,
    red: &mut dyn Policy,
    blue: &mut dyn Policy,
    seed: u64,
) -> Result<MatchResult, GameError> {
    cfg.validate()?;
    red.reset(player_seed(seed, Player::Red));
    blue.reset(player_seed(seed, Player::Blue));
    let mut state = GameState::new(cfg);
    let mut calls = Vec::new();
    while !state.is_over() {
        let p = state.to_move();
        let policy: &mut dyn Policy = match p {
            Player::Red => &mut *red,
            Player::Blue => &mut *blue,
        };
        let mut last_error: Option<String> = None;
        let mut moved = false;
        for attempt in 1..=MAX_ATTEMPTS {
            let view = PlayerView {
                cfg,
                player: p,
                state: &state,
                attempt,
                last_error: last_error.as_deref(),
            };
            let reply = policy
                .respond(&view)
                .map_err(|source| GameError::Policy { player: p, source })?;
            let checked = parse_message(&reply.raw, cfg.kind)
                .map_err(|e| e.to_string())
                .and_then(|m| {
                    let mv = Move::from_message(&m, cfg).map_err(|e| e.to_string())?;
                    state.check(p, &mv, cfg).map_err(|e| e.to_string())?;
                    Ok((m, mv))
                });
            let (system, user) = match reply.prompt {
                Some((s, u)) => (Some(s), Some(u)),
                None => (None, None),
            };
            let mut call = PolicyCall {
                player: p,
                move_index: state.move_index,
                attempt,
                system,
                user,
                raw: reply.raw.clone(),
                accepted: false,
                error: None,
            };
            match checked {
                Ok((m, mv)) => {
                    state
                        .apply(p, mv, reply.raw, Some(m), cfg)
                        .expect("move was checked against this state");
                    call.accepted = true;
                    calls.push(call);
                    moved = true;
                    break;
                }
                Err(e) => {
                    tracing::debug!(player = %p, attempt, error = %e, "unusable response");
                    call.error = Some(e.clone());
                    calls.push(call);
                    last_error = Some(e);
                }
            }
        }
        if !moved {
            tracing::info!(player = %p, "forfeit after {MAX_ATTEMPTS} unusable responses");
            state.forfeit(p, cfg);
        }
    }
    let outcome = state.outcome.expect("loop ends when the game is over");
    let utilities: BTreeMap<Player, f64> = Player::BOTH
        .into_iter()
        .map(|p| (p, utility(cfg, outcome, &state.holdings, p)))
        .collect();
    let (r, b) = (utilities[&Player::Red], utilities[&Player::Blue]);
    let winner = if r > b {
        Some(Player::Red)
    } else if b > r {
        Some(Player::Blue)
    } else {
        None
    };
    Ok(MatchResult {
        game: cfg.kind,
        outcome,
        forfeited_by: state.forfeited_by,
        final_holdings: state.holdings,
        utilities,
        winner,
        rounds: state.move_index,
        transcript: state.transcript,
        calls,
    })
}

/// Turns a match into a trajectory whose steps are the accepted model turns.
/// `agents[0]` played RED and `agents[1]` BLUE; they must differ.
pub fn match_trajectory(
    result: &MatchResult,
    cfg: &GameConfig,
    agents: &[AgentId; 2],
    match_id: impl Into<String>,
    iteration: u32,
) -> Trajectory {
    let agent_of = |p: Player| match p {
        Player::Red => agents[0].clone(),
        Player::Blue => agents[1].clone(),
    };
    let steps = result
        .calls
        .iter()
        .filter(|c| c.accepted)
        .filter_map(|c| {
            let (system, user) = (c.system.as_ref()?, c.user.as_ref()?);
            Some(StepRecord::direct(agent_of(c.player), system.clone(), user.clone(), c.raw.clone(), iteration))
        })
        .collect();
    Trajectory {
        problem_id: match_id.into(),
        steps,
        final_answer: None,
        rewards: BTreeMap::new(),
        detail: TrajectoryDetail::Match {
            game: result.game,
            utilities: Player::BOTH.into_iter().map(|p| (agent_of(p), result.utilities[&p])).collect(),
            baselines: Player::BOTH.into_iter().map(|p| (agent_of(p), cfg.baseline(p))).collect(),
        },
    }
}
