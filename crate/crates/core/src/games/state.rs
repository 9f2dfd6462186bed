use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{GameConfig, Holdings};
use super::grammar::{Tag, TagMessage};
use super::trade::{parse_trade, TradeError, TradeProposal};
use super::{GameKind, Player};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Accepted,
    Rejected,
    NoDeal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Accept,
    Reject,
    /// Neither accept nor propose.
    Pass,
    Propose(TradeProposal),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MoveError {
    #[error("game is over")]
    GameOver,
    #[error("it is {0}'s turn")]
    NotYourTurn(&'static str),
    #[error("{0} has used all its proposals")]
    ProposalLimitExceeded(&'static str),
    #[error("there is no opposing proposal to accept")]
    AcceptWithoutPending,
    #[error("{player} cannot give {amount} {resource}")]
    InsufficientResources {
        player: &'static str,
        resource: String,
        amount: u64,
    },
    #[error("invalid move: {0}")]
    InvalidMove(String),
    #[error(transparent)]
    Trade(#[from] TradeError),
}

impl Move {
    /// Reads the `player answer` / `newly proposed trade` pair.
    ///
    /// A trade is a proposal whether it comes with `NONE` or `PROPOSAL`.
    pub fn from_message(m: &TagMessage, cfg: &GameConfig) -> Result<Move, MoveError> {
        let answer = m.get(Tag::PlayerAnswer).unwrap_or("").trim().to_ascii_uppercase();
        let trade = parse_trade(m.get(Tag::NewlyProposedTrade).unwrap_or("NONE"), &cfg.resources)?;
        match (answer.as_str(), trade) {
            ("ACCEPT", None) => Ok(Move::Accept),
            ("REJECT", None) => Ok(Move::Reject),
            ("NONE", None) => Ok(Move::Pass),
            ("NONE" | "PROPOSAL", Some(t)) => Ok(Move::Propose(t)),
            ("ACCEPT" | "REJECT", Some(_)) => Err(MoveError::InvalidMove(format!(
                "{answer} must come with newly proposed trade NONE"
            ))),
            ("PROPOSAL", None) => Err(MoveError::InvalidMove("PROPOSAL without a trade".into())),
            (other, _) => Err(MoveError::InvalidMove(format!("unknown player answer {other:?}"))),
        }
    }
}

/// One applied turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub player: Player,
    pub move_index: u32,
    pub raw: String,
    pub message: Option<TagMessage>,
    pub action: Move,
    /// Holdings after the move.
    pub holdings: BTreeMap<Player, Holdings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub holdings: BTreeMap<Player, Holdings>,
    pub pending: Option<(Player, TradeProposal)>,
    pub proposals: BTreeMap<Player, u32>,
    /// Moves applied so far.
    pub move_index: u32,
    pub transcript: Vec<TurnRecord>,
    pub outcome: Option<Outcome>,
    #[serde(default)]
    pub forfeited_by: Option<Player>,
}

impl GameState {
    pub fn new(cfg: &GameConfig) -> Self {
        Self {
            holdings: cfg.initial.clone(),
            pending: None,
            proposals: Player::BOTH.into_iter().map(|p| (p, 0)).collect(),
            move_index: 0,
            transcript: Vec::new(),
            outcome: None,
            forfeited_by: None,
        }
    }

    /// RED moves on even indices, BLUE on odd ones.
    pub fn to_move(&self) -> Player {
        if self.move_index.is_multiple_of(2) {
            Player::Red
        } else {
            Player::Blue
        }
    }

    pub fn is_over(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn held(&self, player: Player, resource: &str) -> u64 {
        self.holdings[&player].get(resource).copied().unwrap_or(0)
    }

    /// 1-based index of `player`'s next move among its own moves.
    pub fn own_move_number(&self, player: Player) -> u32 {
        let made = match player {
            Player::Red => self.move_index.div_ceil(2),
            Player::Blue => self.move_index / 2,
        };
        made + 1
    }

    /// Checks `m` against the rules without changing anything.
    pub fn check(&self, player: Player, m: &Move, cfg: &GameConfig) -> Result<(), MoveError> {
        if self.is_over() {
            return Err(MoveError::GameOver);
        }
        if player != self.to_move() {
            return Err(MoveError::NotYourTurn(self.to_move().name()));
        }
        match m {
            Move::Accept => match &self.pending {
                Some((by, trade)) if *by != player => self.check_affordable(trade),
                _ => Err(MoveError::AcceptWithoutPending),
            },
            Move::Reject if cfg.kind == GameKind::ResourceExchange => {
                Err(MoveError::InvalidMove("resource exchange has no REJECT".into()))
            }
            Move::Reject => Ok(()),
            Move::Pass if cfg.kind != GameKind::ResourceExchange => Err(MoveError::InvalidMove(
                "this game requires ACCEPT, REJECT or a proposal".into(),
            )),
            Move::Pass => Ok(()),
            Move::Propose(trade) => {
                if self.proposals[&player] >= cfg.proposal_limit {
                    return Err(MoveError::ProposalLimitExceeded(player.name()));
                }
                if cfg.kind == GameKind::Ultimatum && player == Player::Blue && self.move_index + 1 >= cfg.max_rounds {
                    return Err(MoveError::ProposalLimitExceeded(player.name()));
                }
                if cfg.kind == GameKind::SellBuy {
                    check_sale(trade, cfg)?;
                }
                self.check_affordable(trade)
            }
        }
    }

    fn check_affordable(&self, trade: &TradeProposal) -> Result<(), MoveError> {
        for (p, items) in &trade.gives {
            for (r, &amount) in items {
                if self.held(*p, r) < amount {
                    return Err(MoveError::InsufficientResources {
                        player: p.name(),
                        resource: r.clone(),
                        amount,
                    });
                }
            }
        }
        Ok(())
    }

    /// Applies a validated move, recording it in the transcript.
    pub fn apply(
        &mut self,
        player: Player,
        m: Move,
        raw: impl Into<String>,
        message: Option<TagMessage>,
        cfg: &GameConfig,
    ) -> Result<(), MoveError> {
        self.check(player, &m, cfg)?;
        match &m {
            Move::Accept => {
                let (_, trade) = self.pending.take().expect("checked");
                self.transfer(&trade);
                self.outcome = Some(Outcome::Accepted);
            }
            Move::Reject => self.reject(cfg),
            Move::Pass => {}
            Move::Propose(trade) => {
                *self.proposals.get_mut(&player).expect("both players") += 1;
                self.pending = Some((player, trade.clone()));
            }
        }
        self.move_index += 1;
        if self.outcome.is_none() && self.move_index >= cfg.max_rounds {
            self.outcome = Some(Outcome::NoDeal);
        }
        self.transcript.push(TurnRecord {
            player,
            move_index: self.move_index - 1,
            raw: raw.into(),
            message,
            action: m,
            holdings: self.holdings.clone(),
        });
        Ok(())
    }

    fn transfer(&mut self, trade: &TradeProposal) {
        for (giver, items) in &trade.gives {
            let taker = giver.other();
            for (r, &amount) in items {
                *self.holdings.get_mut(giver).expect("both players").entry(r.clone()).or_default() -= amount;
                *self.holdings.get_mut(&taker).expect("both players").entry(r.clone()).or_default() += amount;
            }
        }
    }

    /// Ultimatum rejection wipes both players' resources; elsewhere nothing changes hands.
    fn reject(&mut self, cfg: &GameConfig) {
        if cfg.kind == GameKind::Ultimatum {
            for h in self.holdings.values_mut() {
                h.values_mut().for_each(|v| *v = 0);
            }
        }
        self.pending = None;
        self.outcome = Some(Outcome::Rejected);
    }

    /// Ends the game against `player` after repeated unusable output. Counts as a rejection.
    pub fn forfeit(&mut self, player: Player, cfg: &GameConfig) {
        if self.is_over() {
            return;
        }
        self.reject(cfg);
        self.forfeited_by = Some(player);
    }
}

/// A sale hands over the seller's whole object stock for currency only.
fn check_sale(trade: &TradeProposal, cfg: &GameConfig) -> Result<(), MoveError> {
    let (object, currency) = (cfg.object(), cfg.currency());
    let stock = cfg.initial_of(Player::Red).get(object).copied().unwrap_or(0);
    let seller_gives_only_object = trade.gives[&Player::Red].iter().all(|(r, a)| r == object || *a == 0);
    let buyer_gives_only_currency = trade.gives[&Player::Blue].iter().all(|(r, a)| r == currency || *a == 0);
    if trade.amount(Player::Red, object) != stock || !seller_gives_only_object || !buyer_gives_only_currency {
        return Err(MoveError::InvalidMove(format!(
            "a sale is Player RED Gives {object}: {stock} | Player BLUE Gives {currency}: price"
        )));
    }
    Ok(())
}

/// Functional form of [`GameState::apply`] taking a parsed message.
pub fn apply_move(s: &GameState, player: Player, m: &TagMessage, cfg: &GameConfig) -> Result<GameState, MoveError> {
    let mv = Move::from_message(m, cfg)?;
    let mut next = s.clone();
    next.apply(player, mv, m.render(), Some(m.clone()), cfg)?;
    Ok(next)
}
