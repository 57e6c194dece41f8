//! Token generation behind a pluggable backend, with boundary-aware stopping.

mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scanner::{Boundary, GroupStack};

pub use remote::{EndpointConfig, RemoteBackend};
pub use scripted::{ScriptedAttempt, ScriptedBackend, ScriptedFixture};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub do_sample: bool,
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
}

impl SamplingParams {
    pub fn qwen3_4b() -> Self {
        SamplingParams {
            do_sample: true,
            temperature: 0.7,
            top_k: 20,
            top_p: 0.8,
        }
    }

    pub fn gemma_e4b() -> Self {
        SamplingParams {
            do_sample: true,
            temperature: 1.0,
            top_k: 64,
            top_p: 0.95,
        }
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams::qwen3_4b()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One chunk request. A trailing assistant message is the text being continued.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub messages: &'a [ChatMessage],
    pub sampling: &'a SamplingParams,
    pub max_tokens: usize,
}

impl GenerationRequest<'_> {
    /// Text of the trailing assistant message, if any.
    pub fn continuation(&self) -> &str {
        match self.messages.last() {
            Some(m) if m.role == Role::Assistant => &m.content,
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenerationChunk {
    pub text: String,
    pub token_count: usize,
    pub eos: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out: {0}")]
    Timeout(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// A fresh generation session for one outer-loop attempt.
    fn session(&self, attempt: usize, seed: u64) -> Box<dyn Session + '_>;

    /// Tokenizer-reported length of `text`, when the backend can tell.
    fn count_tokens(&self, _text: &str) -> Option<usize> {
        None
    }
}

pub trait Session: Send {
    /// Marks the start of a new logical generation call.
    fn begin_call(&mut self);

    fn next_chunk(&mut self, req: &GenerationRequest<'_>) -> Result<GenerationChunk, BackendError>;
}

/// Per-call limits shared by boundary generation and reply generation.
#[derive(Debug, Clone, Copy)]
pub struct CallLimits {
    pub chunk_size: usize,
    /// Cap on new tokens for this call.
    pub max_new: usize,
    /// Budget left for the case; requests stop once it is spent.
    pub remaining: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Boundary(Boundary),
    Eos,
    /// Per-call cap or budget reached without a boundary.
    Cap,
    /// The scanner hit an unbalanced close.
    Poisoned,
}

#[derive(Debug, Clone)]
pub struct BoundaryGeneration {
    /// Generated text, truncated at the boundary.
    pub text: String,
    /// Every token requested, overshoot included.
    pub token_count: usize,
    pub stop: Stop,
    /// Scanner state after `text`.
    pub stack: GroupStack,
    pub overshoot: String,
}

/// Whitespace-delimited token count, the fallback when a service reports none.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Requests chunks continuing `prefix` until the scanner reports a boundary,
/// the stream ends, or a limit is reached.
pub fn generate_to_boundary(
    session: &mut dyn Session,
    context: &[ChatMessage],
    prefix: &str,
    stack: &GroupStack,
    sampling: &SamplingParams,
    limits: CallLimits,
) -> Result<BoundaryGeneration, BackendError> {
    session.begin_call();
    let mut stack = stack.clone();
    let mut text = String::new();
    let mut count = 0;
    let mut messages = context.to_vec();
    messages.push(ChatMessage::assistant(prefix));
    let last = messages.len() - 1;
    let done = |stop, text, count, stack, overshoot| {
        Ok(BoundaryGeneration {
            text,
            token_count: count,
            stop,
            stack,
            overshoot,
        })
    };
    loop {
        if count >= limits.max_new || count >= limits.remaining {
            return done(Stop::Cap, text, count, stack, String::new());
        }
        let req = GenerationRequest {
            messages: &messages,
            sampling,
            max_tokens: limits.chunk_size.min(limits.max_new - count).max(1),
        };
        let chunk = session.next_chunk(&req)?;
        count += chunk.token_count;
        let (used, boundary) = stack.feed_until_boundary(&chunk.text);
        text.push_str(&chunk.text[..used]);
        let overshoot = chunk.text[used..].to_string();
        if let Some(b) = boundary {
            return done(Stop::Boundary(b), text, count, stack, overshoot);
        }
        if stack.is_poisoned() {
            return done(Stop::Poisoned, text, count, stack, overshoot);
        }
        if chunk.eos || (chunk.text.is_empty() && chunk.token_count == 0) {
            let stop = match stack.finish() {
                Some(b) => Stop::Boundary(b),
                None => Stop::Eos,
            };
            return done(stop, text, count, stack, String::new());
        }
        messages[last].content.push_str(&chunk.text);
    }
}

/// A free-form reply (patch turns), requested chunk by chunk.
pub fn generate_reply(
    session: &mut dyn Session,
    context: &[ChatMessage],
    sampling: &SamplingParams,
    limits: CallLimits,
) -> Result<GenerationChunk, BackendError> {
    session.begin_call();
    let mut messages = context.to_vec();
    messages.push(ChatMessage::assistant(""));
    let last = messages.len() - 1;
    let mut out = GenerationChunk::default();
    while out.token_count < limits.max_new && out.token_count < limits.remaining {
        let req = GenerationRequest {
            messages: &messages,
            sampling,
            max_tokens: limits.chunk_size.min(limits.max_new - out.token_count).max(1),
        };
        let chunk = session.next_chunk(&req)?;
        out.token_count += chunk.token_count;
        out.text.push_str(&chunk.text);
        messages[last].content.push_str(&chunk.text);
        if chunk.eos || (chunk.text.is_empty() && chunk.token_count == 0) {
            out.eos = true;
            break;
        }
    }
    Ok(out)
}
