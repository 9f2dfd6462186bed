//! Prompt templates with `{name}` placeholders.
//!
//! A placeholder is a `{` immediately followed by a lowercase identifier and a
//! closing `}`. Any other brace is literal text, so templates may contain JSON
//! snippets or set notation without escaping. Bound values are inserted
//! verbatim and never rescanned.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

pub const QUESTION: &str = "question";
pub const CONTEXT: &str = "context";
pub const FORMAT_PROMPT: &str = "format_prompt";
pub const ORIGINAL_RESPONSE: &str = "original_response";
pub const FEEDBACK: &str = "feedback";
pub const GOLD_ANSWER: &str = "gold_answer";

const FIXED_PLACEHOLDERS: &[&str] = &[
    QUESTION,
    CONTEXT,
    FORMAT_PROMPT,
    ORIGINAL_RESPONSE,
    FEEDBACK,
    GOLD_ANSWER,
];

/// Revision prompt for agents without a dedicated one.
pub const GENERIC_REGENERATE_TEMPLATE: &str = "You are supposed to provide a solution to a given problem. \n\
Here is the given problem:\n\
\"{question}\"\n\
\n\
Here is your original response:\n\
{original_response}\n\
\n\
Here is the feedback for your original response:\n\
\"{feedback}\"\n\
\n\
Please first consider the feedback and then update your opinion on how to solve the problem. {format_prompt}";

/// Placeholder name carrying the output of the agent at 1-based graph position `index`.
pub fn agent_response_key(index: usize) -> String {
    format!("agent_{index}_response")
}

/// Inverse of [`agent_response_key`].
pub fn parse_agent_response_key(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("agent_")?.strip_suffix("_response")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&n| n >= 1)
}

pub fn is_known_placeholder(name: &str) -> bool {
    FIXED_PLACEHOLDERS.contains(&name) || parse_agent_response_key(name).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("template uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    /// Bindings that the template never referenced.
    pub ignored: Vec<String>,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_lowercase()
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'
}

/// Byte ranges of every `{name}` occurrence, braces included.
fn scan(template: &str) -> Vec<(Range<usize>, &str)> {
    let bytes = template.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' && i + 1 < bytes.len() && is_ident_start(bytes[i + 1]) {
            let mut j = i + 1;
            while j < bytes.len() && is_ident_char(bytes[j]) {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'}' {
                found.push((i..j + 1, &template[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// Distinct placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    scan(template)
        .into_iter()
        .filter(|(_, name)| seen.insert(*name))
        .map(|(_, name)| name.to_string())
        .collect()
}

pub fn check_known_placeholders(template: &str) -> Result<(), PromptError> {
    match placeholders(template)
        .into_iter()
        .find(|name| !is_known_placeholder(name))
    {
        Some(name) => Err(PromptError::UnknownPlaceholder(name)),
        None => Ok(()),
    }
}

/// Substitutes every placeholder in `template` with its binding.
pub fn render_prompt(
    template: &str,
    bindings: &BTreeMap<String, String>,
) -> Result<RenderedPrompt, PromptError> {
    let spans = scan(template);
    let mut used = BTreeSet::new();
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for (range, name) in spans {
        let value = bindings
            .get(name)
            .ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&template[last..range.start]);
        out.push_str(value);
        used.insert(name);
        last = range.end;
    }
    out.push_str(&template[last..]);

    let ignored: Vec<String> = bindings
        .keys()
        .filter(|k| !used.contains(k.as_str()))
        .cloned()
        .collect();
    if !ignored.is_empty() {
        tracing::debug!(?ignored, "prompt bindings not referenced by template");
    }
    Ok(RenderedPrompt { text: out, ignored })
}

/// Convenience builder for binding maps.
#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.0
    }

    pub fn render(&self, template: &str) -> Result<String, PromptError> {
        render_prompt(template, &self.0).map(|r| r.text)
    }
}
