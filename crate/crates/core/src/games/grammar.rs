use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::GameKind;

/// Every tag a player response may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    MyName,
    Move,
    ProposalCount,
    MyResources,
    MyGoals,
    Reason,
    PlayerAnswer,
    Message,
    NewlyProposedTrade,
}

impl Tag {
    pub const ALL: [Tag; 9] = [
        Tag::MyName,
        Tag::Move,
        Tag::ProposalCount,
        Tag::MyResources,
        Tag::MyGoals,
        Tag::Reason,
        Tag::PlayerAnswer,
        Tag::Message,
        Tag::NewlyProposedTrade,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Tag::MyName => "my name",
            Tag::Move => "move",
            Tag::ProposalCount => "proposal count",
            Tag::MyResources => "my resources",
            Tag::MyGoals => "my goals",
            Tag::Reason => "reason",
            Tag::PlayerAnswer => "player answer",
            Tag::Message => "message",
            Tag::NewlyProposedTrade => "newly proposed trade",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Tags a response must contain, in order.
    pub fn contract(kind: GameKind) -> &'static [Tag] {
        use Tag::*;
        match kind {
            GameKind::ResourceExchange => &[MyName, MyResources, MyGoals, Reason, PlayerAnswer, Message, NewlyProposedTrade],
            GameKind::Ultimatum => &[MyName, Move, MyResources, Reason, PlayerAnswer, Message, NewlyProposedTrade],
            GameKind::SellBuy => &[ProposalCount, MyResources, MyGoals, Reason, PlayerAnswer, NewlyProposedTrade, Message],
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("missing tag <{0}>")]
    MissingTag(&'static str),
    #[error("malformed tag at byte {0}")]
    MalformedTag(usize),
    #[error("tag <{0}> appears more than once")]
    DuplicateTag(&'static str),
    #[error("unknown tag <{0}>")]
    UnknownTag(String),
    #[error("tag <{0}> is out of order")]
    OutOfOrder(&'static str),
}

/// Tag contents in the order they appeared, whitespace-trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagMessage {
    pub fields: Vec<(Tag, String)>,
}

impl TagMessage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: Tag, content: impl Into<String>) -> Self {
        self.fields.push((tag, content.into()));
        self
    }

    pub fn get(&self, tag: Tag) -> Option<&str> {
        self.fields
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, c)| c.as_str())
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.fields.iter().map(|(t, _)| *t)
    }

    pub fn render(&self) -> String {
        render_message(self)
    }
}

pub fn render_message(m: &TagMessage) -> String {
    let mut out = String::new();
    for (tag, content) in &m.fields {
        out.push_str(&format!("<{tag}> {content} </{tag}>\n"));
    }
    out
}

fn open_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^<\s*(/?)\s*([A-Za-z][A-Za-z ]*?)\s*>").expect("valid regex"))
}

fn normalize(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Finds the closing tag for `tag` at or after `from`. A `</message` missing
/// its `>` is accepted when followed by whitespace or the end of input.
fn find_close(raw: &str, from: usize, tag: Tag) -> Option<(usize, usize)> {
    let exact = format!("</{}>", tag.name());
    if let Some(i) = raw[from..].find(&exact) {
        return Some((from + i, from + i + exact.len()));
    }
    let bare = format!("</{}", tag.name());
    let mut at = from;
    while let Some(i) = raw[at..].find(&bare) {
        let start = at + i;
        let end = start + bare.len();
        if raw[end..].chars().next().is_none_or(char::is_whitespace) {
            return Some((start, end));
        }
        at = end;
    }
    None
}

/// Parses a player response for `kind`.
///
/// Tags must be spelled as in the game prompts, appear once, and follow the
/// game's required order; text between tags is ignored. Contents are scanned
/// only for their own closing tag, so they may contain angle brackets.
pub fn parse_message(raw: &str, kind: GameKind) -> Result<TagMessage, GrammarError> {
    let contract = Tag::contract(kind);
    let mut msg = TagMessage::new();
    let mut pos = 0;
    while let Some(i) = raw[pos..].find('<') {
        let start = pos + i;
        let Some(caps) = open_re().captures(&raw[start..]) else {
            pos = start + 1;
            continue;
        };
        let whole = caps.get(0).expect("match").end();
        let name = normalize(&caps[2]);
        if !caps[1].is_empty() {
            return Err(match Tag::from_name(&name) {
                Some(_) => GrammarError::MalformedTag(start),
                None => GrammarError::UnknownTag(name),
            });
        }
        let tag = match Tag::from_name(&name) {
            Some(t) if contract.contains(&t) => t,
            _ => return Err(GrammarError::UnknownTag(name)),
        };
        if msg.get(tag).is_some() {
            return Err(GrammarError::DuplicateTag(tag.name()));
        }
        let content_start = start + whole;
        let (close_start, close_end) =
            find_close(raw, content_start, tag).ok_or(GrammarError::MalformedTag(start))?;
        msg.fields
            .push((tag, raw[content_start..close_start].trim().to_string()));
        pos = close_end;
    }
    if let Some(missing) = contract.iter().find(|t| msg.get(**t).is_none()) {
        return Err(GrammarError::MissingTag(missing.name()));
    }
    for (seen, expected) in msg.tags().zip(contract.iter()) {
        if seen != *expected {
            return Err(GrammarError::OutOfOrder(seen.name()));
        }
    }
    Ok(msg)
}
