//! Final-answer extraction.
//!
//! Problem tasks end with a line `Answer: <value>`; judgment outputs end with
//! `Opinion: True` or `Opinion: False`. The last marker in the text wins, since
//! revised solutions often quote an earlier answer.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    MultipleChoice,
    YesNoMaybe,
    Judgment,
}

impl TaskKind {
    /// Instruction appended to the terminal agent's prompt.
    pub fn format_prompt(&self) -> &'static str {
        match self {
            TaskKind::MultipleChoice => {
                "End your response with a final line of the form \"Answer: X\", where X is the letter of the correct option."
            }
            TaskKind::YesNoMaybe => {
                "End your response with a final line of the form \"Answer: yes\", \"Answer: no\" or \"Answer: maybe\"."
            }
            TaskKind::Judgment => {
                "End your response with a final line of the form \"Opinion: True\" or \"Opinion: False\"."
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Verdict(bool),
    Token(String),
}

impl Answer {
    pub fn token(&self) -> String {
        match self {
            Answer::Verdict(b) => b.to_string(),
            Answer::Token(t) => t.clone(),
        }
    }

    pub fn as_verdict(&self) -> Option<bool> {
        match self {
            Answer::Verdict(b) => Some(*b),
            Answer::Token(_) => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error("no final answer marker found")]
    AnswerNotFound,
    #[error("last answer marker holds an invalid value: {0:?}")]
    InvalidValue(String),
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\banswer\b[*_\s]{0,3}:").unwrap())
}

fn opinion_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bopinion\b[*_\s]{0,3}:").unwrap())
}

/// Text after the last marker match, up to end of line, with decoration stripped.
fn last_marker_value<'a>(re: &Regex, text: &'a str) -> Option<&'a str> {
    let m = re.find_iter(text).last()?;
    let rest = &text[m.end()..];
    let line = rest.lines().next().unwrap_or("");
    Some(line.trim_matches(|c: char| !c.is_alphanumeric()))
}

fn normalize_choice(value: &str) -> Option<String> {
    let mut chars = value.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    // "B", "B) foo", "B. foo" are fine; "Because" is not.
    match chars.next() {
        None => Some(first.to_ascii_uppercase().to_string()),
        Some(c) if !c.is_alphanumeric() => Some(first.to_ascii_uppercase().to_string()),
        _ => None,
    }
}

fn normalize_yes_no_maybe(value: &str) -> Option<String> {
    let word = value
        .split(|c: char| !c.is_alphanumeric())
        .next()?
        .to_ascii_lowercase();
    matches!(word.as_str(), "yes" | "no" | "maybe").then_some(word)
}

fn normalize_verdict(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Extracts the canonical answer token from model output.
pub fn extract_final_answer(text: &str, kind: TaskKind) -> Result<Answer, AnswerError> {
    match kind {
        TaskKind::Judgment => {
            let value =
                last_marker_value(opinion_marker(), text).ok_or(AnswerError::AnswerNotFound)?;
            normalize_verdict(value)
                .map(Answer::Verdict)
                .ok_or_else(|| AnswerError::InvalidValue(value.to_string()))
        }
        TaskKind::MultipleChoice | TaskKind::YesNoMaybe => {
            let value =
                last_marker_value(answer_marker(), text).ok_or(AnswerError::AnswerNotFound)?;
            let normalized = if kind == TaskKind::MultipleChoice {
                normalize_choice(value)
            } else {
                normalize_yes_no_maybe(value)
            };
            normalized
                .map(Answer::Token)
                .ok_or_else(|| AnswerError::InvalidValue(value.to_string()))
        }
    }
}

/// Canonical form of a gold label, so it compares equal to extracted answers.
pub fn normalize_gold(gold: &str, kind: TaskKind) -> Option<Answer> {
    let value = gold.trim_matches(|c: char| !c.is_alphanumeric());
    match kind {
        TaskKind::MultipleChoice => normalize_choice(value).map(Answer::Token),
        TaskKind::YesNoMaybe => normalize_yes_no_maybe(value).map(Answer::Token),
        TaskKind::Judgment => normalize_verdict(value).map(Answer::Verdict),
    }
}

/// Whether `answer` matches `gold` under `kind`'s normalization.
pub fn is_correct(answer: Option<&Answer>, gold: &str, kind: TaskKind) -> bool {
    match (answer, normalize_gold(gold, kind)) {
        (Some(a), Some(g)) => *a == g,
        _ => false,
    }
}
