#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use agentboot::model::{Backend, BackendError, BackendKind, GenerationRequest, Generator, TaskKind};
use agentboot::topology::ProblemInstance;
use regex::Regex;

pub const HINT: &str = "ZHINTZ";
pub const FIXED: &str = "ZFIXEDZ";
pub const CRIT: &str = "ZCRITZ";

pub fn gold_sentinel(case: u32) -> String {
    format!("GOLDSENTINEL{case:02}")
}

/// Answers from prompt content alone, so results do not depend on call order.
///
/// Every prompt carries a `case-N` tag. Terminal agents answer correctly
/// unless the case is `hard`, and fix their answer once a hint, a fixed
/// upstream analysis or a critique reaches them, unless the case is
/// `unsolvable`.
pub struct OracleBackend {
    pub kind: TaskKind,
    pub golds: BTreeMap<u32, String>,
    pub hard: BTreeSet<u32>,
    pub unsolvable: BTreeSet<u32>,
}

fn case_of(text: &str) -> u32 {
    let re = Regex::new(r"case-(\d+)").unwrap();
    re.captures(text).map_or(0, |c| c[1].parse().unwrap())
}

impl OracleBackend {
    pub fn wrong(&self, gold: &str) -> String {
        match self.kind {
            TaskKind::MultipleChoice => if gold == "A" { "B" } else { "A" }.into(),
            _ => if gold == "yes" { "no" } else { "yes" }.into(),
        }
    }

    fn answer(&self, case: u32, repaired: bool) -> String {
        let gold = self.golds.get(&case).cloned().unwrap_or_else(|| "A".into());
        let right = !self.unsolvable.contains(&case) && (repaired || !self.hard.contains(&case));
        let tag = if repaired { FIXED } else { "" };
        let value = if right { gold } else { self.wrong(&gold) };
        format!("Reasoning for case-{case} {tag}\nAnswer: {value}")
    }
}

impl Backend for OracleBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let text: String = request.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let case = case_of(&text);
        let repaired = text.contains(HINT) || text.contains(FIXED) || text.contains(CRIT);
        Ok(match request.agent_id.as_str() {
            "feedback" => format!("{HINT} for case-{case}: recheck the derivation."),
            "rephraser" => {
                let answer = text.lines().rev().find(|l| l.starts_with("Answer:")).unwrap_or("");
                format!("Direct solution for case-{case} {FIXED}\n{answer}")
            }
            "critic" => format!("{CRIT} case-{case}: reconsider the evidence."),
            "judgment" => {
                let gold = self.golds.get(&case).cloned().unwrap_or_default();
                let ok = text.lines().rev().find(|l| l.starts_with("Answer:")).is_some_and(|l| l.trim_start_matches("Answer:").trim() == gold);
                format!("Checked case-{case}.\nOpinion: {}", if ok { "True" } else { "False" })
            }
            "summarizer" | "solver" | "actor" => self.answer(case, repaired),
            _ => {
                let tag = if repaired { FIXED } else { "" };
                format!("Analysis of case-{case} {tag}")
            }
        })
    }
}

pub fn generator(backend: OracleBackend) -> Generator {
    Generator::new().with_backend(BackendKind::Scripted, Arc::new(backend))
}

/// `n` multiple-choice problems `case-1..=n`, gold letters cycling A-D, each
/// gold carrying a sentinel after the letter.
pub fn problems(n: u32, kind: TaskKind) -> (Vec<ProblemInstance>, BTreeMap<u32, String>) {
    let mut golds = BTreeMap::new();
    let ps = (1..=n)
        .map(|i| {
            let gold = match kind {
                TaskKind::MultipleChoice => ["A", "B", "C", "D"][(i as usize - 1) % 4].to_string(),
                _ => ["yes", "no"][(i as usize - 1) % 2].to_string(),
            };
            golds.insert(i, gold.clone());
            ProblemInstance::new(
                format!("p{i:02}"),
                format!("Question for case-{i}: which option holds?"),
                format!("{gold} ({})", gold_sentinel(i)),
                kind,
            )
            .with_context(format!("Context for case-{i}."))
        })
        .collect();
    (ps, golds)
}

pub fn oracle(kind: TaskKind, golds: BTreeMap<u32, String>, hard: &[u32], unsolvable: &[u32]) -> OracleBackend {
    OracleBackend {
        kind,
        golds,
        hard: hard.iter().copied().collect(),
        unsolvable: unsolvable.iter().copied().collect(),
    }
}
