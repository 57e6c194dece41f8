use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationChunk, GenerationRequest, Session};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedAttempt {
    pub calls: Vec<Vec<String>>,
}

/// `{"attempts":[{"calls":[["tok",...],...]},...]}`
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedFixture {
    pub attempts: Vec<ScriptedAttempt>,
}

impl ScriptedFixture {
    pub fn single(calls: Vec<Vec<String>>) -> Self {
        ScriptedFixture {
            attempts: vec![ScriptedAttempt { calls }],
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Deterministic replay of a fixture. Attempt `i` replays `attempts[i]`; each
/// logical call consumes the next token list, sliced into chunks. Calls past
/// the script yield an empty end-of-stream chunk.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        ScriptedBackend { fixture }
    }

    pub fn fixture(&self) -> &ScriptedFixture {
        &self.fixture
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> String {
        "scripted".to_string()
    }

    fn session(&self, attempt: usize, _seed: u64) -> Box<dyn Session + '_> {
        let calls = self
            .fixture
            .attempts
            .get(attempt)
            .map(|a| a.calls.as_slice())
            .unwrap_or(&[]);
        Box::new(ScriptedSession {
            calls,
            current: None,
            next_call: 0,
            pos: 0,
        })
    }
}

struct ScriptedSession<'a> {
    calls: &'a [Vec<String>],
    current: Option<usize>,
    next_call: usize,
    pos: usize,
}

impl Session for ScriptedSession<'_> {
    fn begin_call(&mut self) {
        self.current = Some(self.next_call);
        self.next_call += 1;
        self.pos = 0;
    }

    fn next_chunk(&mut self, req: &GenerationRequest<'_>) -> Result<GenerationChunk, BackendError> {
        let Some(tokens) = self.current.and_then(|c| self.calls.get(c)) else {
            return Ok(GenerationChunk {
                text: String::new(),
                token_count: 0,
                eos: true,
            });
        };
        let end = (self.pos + req.max_tokens.max(1)).min(tokens.len());
        let mut text = String::new();
        let mut tail_is_space = {
            let prev = req.continuation();
            prev.is_empty() || prev.ends_with(char::is_whitespace)
        };
        for t in &tokens[self.pos..end] {
            if !tail_is_space && !t.starts_with(char::is_whitespace) {
                text.push(' ');
            }
            text.push_str(t);
            tail_is_space = t.is_empty() || t.ends_with(char::is_whitespace);
        }
        let count = end - self.pos;
        self.pos = end;
        Ok(GenerationChunk {
            text,
            token_count: count,
            eos: self.pos >= tokens.len(),
        })
    }
}
