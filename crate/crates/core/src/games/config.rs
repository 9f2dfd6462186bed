use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GameError, GameKind, Player};

pub type Holdings = BTreeMap<String, u64>;

pub fn holdings(items: &[(&str, u64)]) -> Holdings {
    items.iter().map(|(r, a)| (r.to_string(), *a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub kind: GameKind,
    /// Declared resource names. For sell-buy the first is the object and the
    /// second the currency.
    pub resources: Vec<String>,
    pub initial: BTreeMap<Player, Holdings>,
    /// Utility offset for ultimatum and sell-buy.
    #[serde(default)]
    pub reference: f64,
    /// Seller's production cost, shown only to the seller.
    #[serde(default)]
    pub seller_cost: u64,
    /// Buyer's willingness to pay, shown only to the buyer.
    #[serde(default)]
    pub buyer_willingness: u64,
    /// Total moves across both players.
    pub max_rounds: u32,
    /// Proposals each player may make.
    pub proposal_limit: u32,
}

pub const PRESET_NAMES: [&str; 7] = [
    "resource-exchange",
    "resource-exchange-35-15",
    "ultimatum",
    "ultimatum-1000",
    "sell-buy",
    "sell-buy-30-70",
    "sell-buy-40-60",
];

impl GameConfig {
    /// 25X+5Y against 5X+25Y, 8 moves, 3 proposals each.
    pub fn resource_exchange() -> Self {
        Self::resource_exchange_with(25, 5)
    }

    pub fn resource_exchange_with(major: u64, minor: u64) -> Self {
        Self {
            kind: GameKind::ResourceExchange,
            resources: vec!["X".into(), "Y".into()],
            initial: [
                (Player::Red, holdings(&[("X", major), ("Y", minor)])),
                (Player::Blue, holdings(&[("X", minor), ("Y", major)])),
            ]
            .into(),
            reference: 0.0,
            seller_cost: 0,
            buyer_willingness: 0,
            max_rounds: 8,
            proposal_limit: 3,
        }
    }

    /// RED splits $100 with BLUE; 4 moves each, reference 50.
    pub fn ultimatum() -> Self {
        Self::ultimatum_with(100)
    }

    /// The reference point stays at half the pot.
    pub fn ultimatum_with(total: u64) -> Self {
        Self {
            kind: GameKind::Ultimatum,
            resources: vec!["Dollars".into()],
            initial: [
                (Player::Red, holdings(&[("Dollars", total)])),
                (Player::Blue, holdings(&[("Dollars", 0)])),
            ]
            .into(),
            reference: total as f64 / 2.0,
            seller_cost: 0,
            buyer_willingness: 0,
            max_rounds: 8,
            proposal_limit: 4,
        }
    }

    /// RED sells 1X to BLUE holding 100 ZUP; 10 moves, 4 proposals each, reference 50.
    pub fn sell_buy() -> Self {
        Self::sell_buy_with(40, 60)
    }

    pub fn sell_buy_with(seller_cost: u64, buyer_willingness: u64) -> Self {
        Self {
            kind: GameKind::SellBuy,
            resources: vec!["X".into(), "ZUP".into()],
            initial: [
                (Player::Red, holdings(&[("X", 1), ("ZUP", 0)])),
                (Player::Blue, holdings(&[("X", 0), ("ZUP", 100)])),
            ]
            .into(),
            reference: 50.0,
            seller_cost,
            buyer_willingness,
            max_rounds: 10,
            proposal_limit: 4,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "resource-exchange" => Self::resource_exchange(),
            "resource-exchange-35-15" => Self::resource_exchange_with(35, 15),
            "ultimatum" => Self::ultimatum(),
            "ultimatum-1000" => Self::ultimatum_with(1000),
            "sell-buy" | "sell-buy-40-60" => Self::sell_buy(),
            "sell-buy-30-70" => Self::sell_buy_with(30, 70),
            _ => return None,
        })
    }

    pub fn initial_of(&self, player: Player) -> &Holdings {
        &self.initial[&player]
    }

    pub fn total(&self, resource: &str) -> u64 {
        self.initial
            .values()
            .map(|h| h.get(resource).copied().unwrap_or(0))
            .sum()
    }

    pub fn object(&self) -> &str {
        &self.resources[0]
    }

    pub fn currency(&self) -> &str {
        &self.resources[self.resources.len() - 1]
    }

    /// Moves each player gets.
    pub fn moves_each(&self) -> u32 {
        self.max_rounds.div_ceil(2)
    }

    /// Utility a player is measured against when deciding good training data:
    /// its starting total in resource-exchange, 0 elsewhere.
    pub fn baseline(&self, player: Player) -> f64 {
        match self.kind {
            GameKind::ResourceExchange => self.initial_of(player).values().sum::<u64>() as f64,
            GameKind::Ultimatum | GameKind::SellBuy => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidConfig(m.to_string()));
        if self.resources.is_empty() {
            return bad("no resources declared");
        }
        for p in Player::BOTH {
            let Some(h) = self.initial.get(&p) else {
                return bad(&format!("no initial holdings for {}", p.name()));
            };
            if let Some(r) = h.keys().find(|r| !self.resources.contains(r)) {
                return bad(&format!("undeclared resource {r} in {} holdings", p.name()));
            }
        }
        if self.max_rounds == 0 || self.proposal_limit == 0 {
            return bad("max_rounds and proposal_limit must be positive");
        }
        if !self.reference.is_finite() {
            return bad("reference must be finite");
        }
        match self.kind {
            GameKind::Ultimatum if self.resources.len() != 1 => bad("ultimatum splits exactly one resource"),
            GameKind::SellBuy if self.resources.len() != 2 => bad("sell-buy needs an object and a currency"),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let re = GameConfig::resource_exchange();
        assert_eq!((re.total("X"), re.total("Y")), (30, 30));
        assert_eq!((re.max_rounds, re.proposal_limit), (8, 3));
        assert_eq!(re.baseline(Player::Red), 30.0);

        let ul = GameConfig::ultimatum();
        assert_eq!((ul.max_rounds, ul.moves_each(), ul.reference), (8, 4, 50.0));

        let sb = GameConfig::sell_buy();
        assert_eq!((sb.max_rounds, sb.proposal_limit, sb.reference), (10, 4, 50.0));
        assert_eq!((sb.object(), sb.currency()), ("X", "ZUP"));
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            GameConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(GameConfig::preset("ultimatum-1000").unwrap().reference, 500.0);
        assert!(GameConfig::preset("chess").is_none());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = GameConfig::sell_buy_with(30, 70);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<GameConfig>(&text).unwrap(), cfg);
    }
}
