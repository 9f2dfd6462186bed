//! Agent identities, prompt templating, text-generation backends and answer extraction.

mod agent;
mod answer;
mod backend;
pub mod prompt;
mod remote;

pub use agent::{
    AgentId, AgentSpec, AgentSpecError, BackendKind, ChatTurn, Decoding, ModelRef, Speaker,
    DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
pub use answer::{extract_final_answer, is_correct, normalize_gold, Answer, AnswerError, TaskKind};
pub use backend::{
    Backend, BackendError, CallLog, CallRecord, GenerationRequest, Generator, ScriptEntry,
    ScriptedBackend,
};
pub use prompt::{render_prompt, Bindings, PromptError, RenderedPrompt};
pub use remote::{
    parse_chat_response, ChatRequestBody, RemoteBackend, RemoteConfig, ENV_API_KEY, ENV_BASE_URL,
};
