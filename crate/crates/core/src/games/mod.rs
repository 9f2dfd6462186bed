//! Two-player negotiation games: resource exchange, multi-turn ultimatum and
//! sell-buy, played through a tag-based message grammar.

mod config;
mod grammar;
mod play;
mod policy;
pub mod prompts;
mod state;
mod tournament;
mod trade;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{holdings, GameConfig, Holdings, PRESET_NAMES};
pub use grammar::{parse_message, render_message, GrammarError, Tag, TagMessage};
pub use play::{
    match_trajectory, run_match, utility, MatchResult, PolicyCall, MAX_ATTEMPTS,
};
pub use policy::{
    compose_message, default_proposal, player_system_prompt, LlmPolicy, PlayerView, Policy,
    PolicyEnv, PolicyError, PolicySpec, RandomPolicy, ScriptedPolicy,
};
pub use state::{apply_move, GameState, Move, MoveError, Outcome, TurnRecord};
pub use tournament::{match_seed, run_tournament, PairingScore, ScoreTable};
pub use trade::{parse_trade, render_trade, TradeError, TradeProposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    ResourceExchange,
    Ultimatum,
    SellBuy,
}

impl GameKind {
    pub const ALL: [GameKind; 3] = [GameKind::ResourceExchange, GameKind::Ultimatum, GameKind::SellBuy];

    pub fn name(&self) -> &'static str {
        match self {
            GameKind::ResourceExchange => "resource-exchange",
            GameKind::Ultimatum => "ultimatum",
            GameKind::SellBuy => "sell-buy",
        }
    }

    pub fn default_config(&self) -> GameConfig {
        match self {
            GameKind::ResourceExchange => GameConfig::resource_exchange(),
            GameKind::Ultimatum => GameConfig::ultimatum(),
            GameKind::SellBuy => GameConfig::sell_buy(),
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameKind {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GameKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GameError::InvalidConfig(format!("unknown game {s:?}")))
    }
}

/// RED moves first (player 1, the seller in sell-buy); BLUE is player 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Player {
    Red,
    Blue,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Red, Player::Blue];

    pub fn name(&self) -> &'static str {
        match self {
            Player::Red => "RED",
            Player::Blue => "BLUE",
        }
    }

    pub fn other(&self) -> Player {
        match self {
            Player::Red => Player::Blue,
            Player::Blue => Player::Red,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("policy for {player}: {source}")]
    Policy {
        player: Player,
        #[source]
        source: PolicyError,
    },
}
