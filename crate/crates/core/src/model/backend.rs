//! Text-generation backends and the call log.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::agent::{AgentId, AgentSpec, BackendKind, ChatTurn, ModelRef, Speaker};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
    #[error("script exhausted for agent {agent_id} at call {call_index}")]
    ScriptExhausted { agent_id: AgentId, call_index: usize },
    #[error("invalid chat history: {0}")]
    InvalidHistory(String),
    #[error("no {0:?} backend configured")]
    Unavailable(BackendKind),
}

impl BackendError {
    /// Transport and 5xx failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub agent_id: AgentId,
    pub model: ModelRef,
    pub messages: Vec<ChatTurn>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

/// One completed generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: usize,
    pub agent_id: AgentId,
    pub model_name: String,
    pub messages: Vec<ChatTurn>,
    pub response: String,
}

impl CallRecord {
    /// Concatenated content of every message sent, for information-flow checks.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Append-only record of every generation, in completion order.
#[derive(Debug, Default)]
pub struct CallLog {
    records: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn append(&self, request: &GenerationRequest, response: &str) {
        let mut records = self.records.lock().expect("call log poisoned");
        let seq = records.len();
        records.push(CallRecord {
            seq,
            agent_id: request.agent_id.clone(),
            model_name: request.model.model_name.clone(),
            messages: request.messages.clone(),
            response: response.to_string(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.records.lock().expect("call log poisoned").clone()
    }

    /// Records from index `from` onwards.
    pub fn since(&self, from: usize) -> Vec<CallRecord> {
        let records = self.records.lock().expect("call log poisoned");
        records.get(from..).map(<[_]>::to_vec).unwrap_or_default()
    }
}

/// Routes generation requests to the backend named by each agent's [`ModelRef`]
/// and logs every completed call.
#[derive(Clone)]
pub struct Generator {
    scripted: Option<Arc<dyn Backend>>,
    remote: Option<Arc<dyn Backend>>,
    log: Arc<CallLog>,
}

impl Generator {
    pub fn new() -> Self {
        Self {
            scripted: None,
            remote: None,
            log: Arc::new(CallLog::new()),
        }
    }

    pub fn with_scripted(mut self, backend: impl Backend + 'static) -> Self {
        self.scripted = Some(Arc::new(backend));
        self
    }

    pub fn with_remote(mut self, backend: impl Backend + 'static) -> Self {
        self.remote = Some(Arc::new(backend));
        self
    }

    pub fn with_backend(mut self, kind: BackendKind, backend: Arc<dyn Backend>) -> Self {
        match kind {
            BackendKind::Scripted => self.scripted = Some(backend),
            BackendKind::RemoteChat => self.remote = Some(backend),
        }
        self
    }

    pub fn log(&self) -> &CallLog {
        &self.log
    }

    /// Calls the agent's model on `history`, which must open with the only system turn.
    pub fn generate(&self, agent: &AgentSpec, history: &[ChatTurn]) -> Result<String, BackendError> {
        match history.first() {
            Some(t) if t.speaker_role == Speaker::System => {}
            _ => {
                return Err(BackendError::InvalidHistory(
                    "history must begin with a system turn".into(),
                ))
            }
        }
        if history[1..]
            .iter()
            .any(|t| t.speaker_role == Speaker::System)
        {
            return Err(BackendError::InvalidHistory(
                "history contains more than one system turn".into(),
            ));
        }
        let kind = agent.model_ref.backend_kind;
        let backend = match kind {
            BackendKind::Scripted => self.scripted.as_ref(),
            BackendKind::RemoteChat => self.remote.as_ref(),
        }
        .ok_or(BackendError::Unavailable(kind))?;

        let request = GenerationRequest {
            agent_id: agent.agent_id.clone(),
            model: agent.model_ref.clone(),
            messages: history.to_vec(),
        };
        let response = backend.complete(&request)?;
        self.log.append(&request, &response);
        Ok(response)
    }

    /// Single-turn call: the agent's system prompt followed by `user`.
    pub fn ask(&self, agent: &AgentSpec, user: &str) -> Result<String, BackendError> {
        self.generate(
            agent,
            &[ChatTurn::system(&agent.system_prompt), ChatTurn::user(user)],
        )
    }
}

impl Default for Generator {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub agent_id: AgentId,
    /// When set, the entry only answers requests whose messages contain this text.
    #[serde(default)]
    pub pattern: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(agent_id: impl Into<AgentId>, response: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            pattern: None,
            response: response.into(),
        }
    }

    pub fn matching(
        agent_id: impl Into<AgentId>,
        pattern: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        Self {
            agent_id: agent_id.into(),
            pattern: Some(pattern.into()),
            response: response.into(),
        }
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    consumed: Vec<bool>,
    calls_per_agent: std::collections::HashMap<AgentId, usize>,
}

/// Canned responses consumed in order, per agent.
///
/// A request takes the first unconsumed entry for its agent whose pattern (if
/// any) occurs in the request messages. Running out is an error.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let n = entries.len();
        Self {
            entries,
            state: Mutex::new(ScriptState {
                consumed: vec![false; n],
                ..Default::default()
            }),
        }
    }

    /// Per-agent queues from `(agent, response)` pairs.
    pub fn from_pairs<A, R>(pairs: impl IntoIterator<Item = (A, R)>) -> Self
    where
        A: Into<AgentId>,
        R: Into<String>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(a, r)| ScriptEntry::new(a, r))
                .collect(),
        )
    }

    /// Replays a recorded call log verbatim.
    pub fn from_call_log(records: &[CallRecord]) -> Self {
        Self::new(
            records
                .iter()
                .map(|r| ScriptEntry::new(r.agent_id.clone(), r.response.clone()))
                .collect(),
        )
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("script state poisoned");
        state.consumed.iter().filter(|c| !**c).count()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut state = self.state.lock().expect("script state poisoned");
        let call_index = {
            let n = state
                .calls_per_agent
                .entry(request.agent_id.clone())
                .or_insert(0);
            *n += 1;
            *n - 1
        };
        let hit = self.entries.iter().enumerate().find(|(i, e)| {
            !state.consumed[*i]
                && e.agent_id == request.agent_id
                && e.pattern.as_deref().is_none_or(|p| {
                    request.messages.iter().any(|m| m.content.contains(p))
                })
        });
        match hit {
            Some((i, entry)) => {
                state.consumed[i] = true;
                Ok(entry.response.clone())
            }
            None => Err(BackendError::ScriptExhausted {
                agent_id: request.agent_id.clone(),
                call_index,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: &str) -> AgentSpec {
        AgentSpec::new(id, id, "sys", "{question}", ModelRef::scripted("base"))
    }

    #[test]
    fn scripted_returns_queue_in_order() {
        let g = Generator::new().with_scripted(ScriptedBackend::from_pairs([("a", "hello")]));
        assert_eq!(g.ask(&agent("a"), "hi").unwrap(), "hello");
        let err = g.ask(&agent("a"), "hi").unwrap_err();
        assert_eq!(
            err,
            BackendError::ScriptExhausted {
                agent_id: "a".into(),
                call_index: 1
            }
        );
        assert_eq!(g.log().len(), 1);
    }

    #[test]
    fn queues_are_per_agent() {
        let g = Generator::new().with_scripted(ScriptedBackend::from_pairs([
            ("a", "a1"),
            ("b", "b1"),
            ("a", "a2"),
        ]));
        assert_eq!(g.ask(&agent("b"), "x").unwrap(), "b1");
        assert_eq!(g.ask(&agent("a"), "x").unwrap(), "a1");
        assert_eq!(g.ask(&agent("a"), "x").unwrap(), "a2");
    }

    #[test]
    fn pattern_selects_entry() {
        let g = Generator::new().with_scripted(ScriptedBackend::new(vec![
            ScriptEntry::matching("a", "Q2", "second"),
            ScriptEntry::matching("a", "Q1", "first"),
        ]));
        assert_eq!(g.ask(&agent("a"), "this is Q1").unwrap(), "first");
        assert_eq!(g.ask(&agent("a"), "this is Q2").unwrap(), "second");
    }

    #[test]
    fn history_must_start_with_single_system_turn() {
        let g = Generator::new().with_scripted(ScriptedBackend::from_pairs([("a", "x")]));
        let a = agent("a");
        assert!(matches!(
            g.generate(&a, &[ChatTurn::user("q")]),
            Err(BackendError::InvalidHistory(_))
        ));
        assert!(matches!(
            g.generate(
                &a,
                &[ChatTurn::system("s"), ChatTurn::system("s2"), ChatTurn::user("q")]
            ),
            Err(BackendError::InvalidHistory(_))
        ));
    }

    #[test]
    fn missing_backend_kind() {
        let g = Generator::new();
        let mut a = agent("a");
        a.model_ref = ModelRef::remote("gpt");
        assert_eq!(
            g.ask(&a, "q").unwrap_err(),
            BackendError::Unavailable(BackendKind::RemoteChat)
        );
    }

    #[test]
    fn replay_reproduces_responses() {
        let g = Generator::new().with_scripted(ScriptedBackend::from_pairs([
            ("a", "one"),
            ("b", "two"),
            ("a", "three"),
        ]));
        let calls = [("a", "p1"), ("b", "p2"), ("a", "p3")];
        for (id, p) in calls {
            g.ask(&agent(id), p).unwrap();
        }
        let recorded = g.log().snapshot();

        let replay = Generator::new().with_scripted(ScriptedBackend::from_call_log(&recorded));
        for (id, p) in calls {
            replay.ask(&agent(id), p).unwrap();
        }
        let responses: Vec<_> = replay.log().snapshot().into_iter().map(|r| r.response).collect();
        let original: Vec<_> = recorded.into_iter().map(|r| r.response).collect();
        assert_eq!(responses, original);
    }

    #[test]
    fn concurrent_calls_consume_each_entry_once() {
        let entries: Vec<_> = (0..64).map(|i| ScriptEntry::new("a", format!("r{i}"))).collect();
        let g = Generator::new().with_scripted(ScriptedBackend::new(entries));
        let a = agent("a");
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..8 {
                        g.ask(&a, "q").unwrap();
                    }
                });
            }
        });
        let mut seen: Vec<_> = g.log().snapshot().into_iter().map(|r| r.response).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 64);
        let seqs: Vec<_> = g.log().snapshot().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (0..64).collect::<Vec<_>>());
    }
}
