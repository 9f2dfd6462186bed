use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Player;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TradeError {
    #[error("amount {0:?} is not an integer")]
    NonIntegerAmount(String),
    #[error("amount {0:?} is negative")]
    NegativeAmount(String),
    #[error("resource {0:?} is not part of this game")]
    UnknownResource(String),
    #[error("trade syntax: {0}")]
    SyntaxError(String),
}

/// What each player hands over if the trade is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeProposal {
    pub gives: BTreeMap<Player, BTreeMap<String, u64>>,
}

impl Default for TradeProposal {
    fn default() -> Self {
        Self {
            gives: [(Player::Red, BTreeMap::new()), (Player::Blue, BTreeMap::new())].into(),
        }
    }
}

impl TradeProposal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn give(mut self, player: Player, resource: impl Into<String>, amount: u64) -> Self {
        self.gives
            .entry(player)
            .or_default()
            .insert(resource.into(), amount);
        self
    }

    pub fn amount(&self, player: Player, resource: &str) -> u64 {
        self.gives
            .get(&player)
            .and_then(|m| m.get(resource))
            .copied()
            .unwrap_or(0)
    }

    pub fn render(&self) -> String {
        render_trade(Some(self))
    }
}

impl fmt::Display for TradeProposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// `Player RED Gives X: 10, Y: 0 | Player BLUE Gives Y: 5`, or `NONE`.
pub fn render_trade(trade: Option<&TradeProposal>) -> String {
    let Some(t) = trade else {
        return "NONE".into();
    };
    let side = |p: Player| {
        let items: Vec<String> = t
            .gives
            .get(&p)
            .map(|m| m.iter().map(|(r, a)| format!("{r}: {a}")).collect())
            .unwrap_or_default();
        format!("Player {} Gives {}", p.name(), items.join(", "))
            .trim_end()
            .to_string()
    };
    format!("{} | {}", side(Player::Red), side(Player::Blue))
}

fn side_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*player\s+(red|blue)\s+gives\b(.*)$").expect("valid regex"))
}

fn parse_amount(raw: &str) -> Result<u64, TradeError> {
    let s = raw.trim();
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        return s
            .parse()
            .map_err(|_| TradeError::SyntaxError(format!("amount {s:?} out of range")));
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 && v.fract() == 0.0 => Err(TradeError::NegativeAmount(s.into())),
        Ok(v) if v.is_finite() => Err(TradeError::NonIntegerAmount(s.into())),
        _ => Err(TradeError::SyntaxError(format!("amount {s:?} is not a number"))),
    }
}

/// Parses the trade grammar. `NONE` yields `None`.
pub fn parse_trade(text: &str, resources: &[String]) -> Result<Option<TradeProposal>, TradeError> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let sides: Vec<&str> = text.split('|').collect();
    if sides.len() != 2 {
        return Err(TradeError::SyntaxError(format!(
            "expected two sides separated by '|', got {}",
            sides.len()
        )));
    }
    let mut trade = TradeProposal::new();
    let mut seen = Vec::with_capacity(2);
    for side in sides {
        let caps = side_re()
            .captures(side)
            .ok_or_else(|| TradeError::SyntaxError(format!("expected 'Player <RED|BLUE> Gives', got {:?}", side.trim())))?;
        let player = if caps[1].eq_ignore_ascii_case("red") {
            Player::Red
        } else {
            Player::Blue
        };
        if seen.contains(&player) {
            return Err(TradeError::SyntaxError(format!("player {} appears twice", player.name())));
        }
        let mut items = BTreeMap::new();
        for item in caps[2].split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "...") {
            let (name, amount) = item
                .split_once(':')
                .ok_or_else(|| TradeError::SyntaxError(format!("expected 'resource: amount', got {item:?}")))?;
            let name = name.trim();
            if !resources.iter().any(|r| r == name) {
                return Err(TradeError::UnknownResource(name.to_string()));
            }
            let amount = parse_amount(amount)?;
            if items.insert(name.to_string(), amount).is_some() {
                return Err(TradeError::SyntaxError(format!("resource {name} listed twice")));
            }
        }
        seen.push(player);
        trade.gives.insert(player, items);
    }
    Ok(Some(trade))
}
