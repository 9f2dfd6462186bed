use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::GameConfig;
use super::play::{run_match, MatchResult};
use super::policy::{PolicyEnv, PolicySpec};
use super::{GameError, Player};

/// Seed of match `index` in pairing `pairing`, independent of scheduling.
pub fn match_seed(seed: u64, pairing: usize, index: usize) -> u64 {
    // splitmix64 over the packed coordinates
    let mut z = seed
        .wrapping_add((pairing as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Aggregate over the matches of one pairing. P1 plays RED.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairingScore {
    pub pairing: String,
    pub games: u32,
    /// Games with a strict winner.
    pub decisive: u32,
    pub wins_p1: u32,
    pub wins_p2: u32,
    pub payoff_p1: f64,
    pub payoff_p2: f64,
}

impl PairingScore {
    pub fn new(pairing: impl Into<String>) -> Self {
        Self {
            pairing: pairing.into(),
            ..Self::default()
        }
    }

    pub fn record(&mut self, r: &MatchResult) {
        self.games += 1;
        self.payoff_p1 += r.utility(Player::Red);
        self.payoff_p2 += r.utility(Player::Blue);
        match r.winner {
            Some(Player::Red) => self.wins_p1 += 1,
            Some(Player::Blue) => self.wins_p2 += 1,
            None => return,
        }
        self.decisive += 1;
    }

    pub fn merge(&mut self, other: &PairingScore) {
        self.games += other.games;
        self.decisive += other.decisive;
        self.wins_p1 += other.wins_p1;
        self.wins_p2 += other.wins_p2;
        self.payoff_p1 += other.payoff_p1;
        self.payoff_p2 += other.payoff_p2;
    }

    /// Share of decisive games won, in percent. Ties are excluded.
    pub fn win_rate_p1(&self) -> Option<f64> {
        (self.decisive > 0).then(|| 100.0 * self.wins_p1 as f64 / self.decisive as f64)
    }

    pub fn win_rate_p2(&self) -> Option<f64> {
        (self.decisive > 0).then(|| 100.0 * self.wins_p2 as f64 / self.decisive as f64)
    }

    pub fn mean_payoff_p1(&self) -> Option<f64> {
        (self.games > 0).then(|| self.payoff_p1 / self.games as f64)
    }

    pub fn mean_payoff_p2(&self) -> Option<f64> {
        (self.games > 0).then(|| self.payoff_p2 / self.games as f64)
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    pairing: &'a str,
    decisive_games: u32,
    win_rate_p1: Option<String>,
    win_rate_p2: Option<String>,
    mean_payoff_p1: Option<String>,
    mean_payoff_p2: Option<String>,
}

fn fmt1(v: Option<f64>) -> Option<String> {
    v.map(|x| format!("{x:.1}"))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub rows: Vec<PairingScore>,
}

impl ScoreTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                pairing: &r.pairing,
                decisive_games: r.decisive,
                win_rate_p1: fmt1(r.win_rate_p1()),
                win_rate_p2: fmt1(r.win_rate_p2()),
                mean_payoff_p1: fmt1(r.mean_payoff_p1()),
                mean_payoff_p2: fmt1(r.mean_payoff_p2()),
            })
            .expect("writing to memory");
        }
        if self.rows.is_empty() {
            return "pairing,decisive_games,win_rate_p1,win_rate_p2,mean_payoff_p1,mean_payoff_p2\n".into();
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

impl fmt::Display for ScoreTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let na = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
        let width = self.rows.iter().map(|r| r.pairing.len()).max().unwrap_or(7).max(7);
        writeln!(
            f,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>10}  {:>10}",
            "pairing", "decisive", "win% p1", "win% p2", "payoff p1", "payoff p2"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>8}  {:>8}  {:>8}  {:>10}  {:>10}",
                r.pairing,
                r.decisive,
                na(fmt1(r.win_rate_p1())),
                na(fmt1(r.win_rate_p2())),
                na(fmt1(r.mean_payoff_p1())),
                na(fmt1(r.mean_payoff_p2())),
            )?;
        }
        Ok(())
    }
}

/// Plays `n_matches` per pairing in parallel. Results are folded in match
/// order, so the table does not depend on scheduling.
pub fn run_tournament(
    cfg: &GameConfig,
    pairings: &[(PolicySpec, PolicySpec)],
    n_matches: usize,
    seed: u64,
    env: &PolicyEnv,
) -> Result<ScoreTable, GameError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..pairings.len())
        .flat_map(|p| (0..n_matches).map(move |i| (p, i)))
        .collect();
    let results: Vec<Result<(usize, MatchResult), GameError>> = jobs
        .par_iter()
        .map(|&(p, i)| {
            let (s1, s2) = &pairings[p];
            let build = |spec: &PolicySpec, player: Player| {
                env.build(spec, cfg, player)
                    .map_err(|source| GameError::Policy { player, source })
            };
            let mut red = build(s1, Player::Red)?;
            let mut blue = build(s2, Player::Blue)?;
            run_match(cfg, red.as_mut(), blue.as_mut(), match_seed(seed, p, i)).map(|r| (p, r))
        })
        .collect();
    let mut rows: Vec<PairingScore> = pairings
        .iter()
        .map(|(a, b)| PairingScore::new(format!("{a} vs {b}")))
        .collect();
    for r in results {
        let (p, result) = r?;
        rows[p].record(&result);
    }
    Ok(ScoreTable { rows })
}
