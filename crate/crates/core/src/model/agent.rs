use std::fmt;

use serde::{Deserialize, Serialize};

use super::prompt::{self, PromptError};

/// Identifier of an agent within one pipeline.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteChat,
    Scripted,
}

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// Which backend serves an agent, and with which model version and decoding settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub backend_kind: BackendKind,
    pub model_name: String,
    #[serde(default)]
    pub decoding: Decoding,
}

impl ModelRef {
    pub fn new(backend_kind: BackendKind, model_name: impl Into<String>) -> Self {
        Self {
            backend_kind,
            model_name: model_name.into(),
            decoding: Decoding::default(),
        }
    }

    pub fn scripted(model_name: impl Into<String>) -> Self {
        Self::new(BackendKind::Scripted, model_name)
    }

    pub fn remote(model_name: impl Into<String>) -> Self {
        Self::new(BackendKind::RemoteChat, model_name)
    }

    /// Same backend and decoding, different model version.
    pub fn with_model_name(&self, model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), AgentSpecError> {
        let t = self.decoding.temperature;
        if !t.is_finite() || t < 0.0 {
            return Err(AgentSpecError::InvalidTemperature(t));
        }
        if self.decoding.max_tokens == 0 {
            return Err(AgentSpecError::InvalidMaxTokens);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

impl Speaker {
    pub fn as_str(&self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    #[serde(rename = "role")]
    pub speaker_role: Speaker,
    pub content: String,
}

impl ChatTurn {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            speaker_role: Speaker::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            speaker_role: Speaker::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            speaker_role: Speaker::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AgentSpecError {
    #[error("temperature must be finite and >= 0, got {0}")]
    InvalidTemperature(f64),
    #[error("max_tokens must be positive")]
    InvalidMaxTokens,
    #[error("agent {agent}: {source}")]
    Template {
        agent: AgentId,
        #[source]
        source: PromptError,
    },
}

/// An agent's role identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: AgentId,
    pub role_name: String,
    pub system_prompt: String,
    pub turn_template: String,
    /// Template used when the agent revises its own output in light of feedback.
    /// Falls back to [`prompt::GENERIC_REGENERATE_TEMPLATE`].
    #[serde(default)]
    pub regenerate_template: Option<String>,
    pub model_ref: ModelRef,
}

impl AgentSpec {
    pub fn new(
        agent_id: impl Into<AgentId>,
        role_name: impl Into<String>,
        system_prompt: impl Into<String>,
        turn_template: impl Into<String>,
        model_ref: ModelRef,
    ) -> Self {
        Self {
            agent_id: agent_id.into(),
            role_name: role_name.into(),
            system_prompt: system_prompt.into(),
            turn_template: turn_template.into(),
            regenerate_template: None,
            model_ref,
        }
    }

    pub fn with_regenerate_template(mut self, template: impl Into<String>) -> Self {
        self.regenerate_template = Some(template.into());
        self
    }

    pub fn with_model(mut self, model_ref: ModelRef) -> Self {
        self.model_ref = model_ref;
        self
    }

    pub fn regenerate_template(&self) -> &str {
        self.regenerate_template
            .as_deref()
            .unwrap_or(prompt::GENERIC_REGENERATE_TEMPLATE)
    }

    /// Checks decoding settings and that every template placeholder is a known one.
    pub fn validate(&self) -> Result<(), AgentSpecError> {
        self.model_ref.validate()?;
        for template in std::iter::once(self.turn_template.as_str())
            .chain(self.regenerate_template.as_deref())
        {
            prompt::check_known_placeholders(template).map_err(|source| {
                AgentSpecError::Template {
                    agent: self.agent_id.clone(),
                    source,
                }
            })?;
        }
        Ok(())
    }
}
