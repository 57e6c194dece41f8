//! OpenAI-compatible chat/completions client.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ureq::Agent;

use super::{
    whitespace_tokens, Backend, BackendError, ChatMessage, GenerationChunk, GenerationRequest, Role, Session,
};

fn default_api_key_env() -> String {
    "DTV_API_KEY".to_string()
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// For example `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, read at request time.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

impl EndpointConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        EndpointConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: default_api_key_env(),
            timeout_s: default_timeout_s(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: EndpointConfig,
    agent: Agent,
}

enum Failure {
    Transient(BackendError),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.config.api_key_env).ok().filter(|k| !k.is_empty())
    }

    /// `GET /models` answers with a success status.
    pub fn health(&self) -> bool {
        let mut req = self.agent.get(self.url("models"));
        if let Some(k) = self.api_key() {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        req.call().map(|r| r.status().is_success()).unwrap_or(false)
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.agent.post(url);
        if let Some(k) = self.api_key() {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(Failure::Transient(BackendError::Timeout(t.to_string()))),
            Err(e) => return Err(Failure::Transient(BackendError::Unavailable(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transient(BackendError::Unavailable(e.to_string())))?;
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(BackendError::Unavailable(format!("HTTP {status}"))));
        }
        if status >= 400 {
            return Err(Failure::Fatal(BackendError::Unavailable(format!("HTTP {status}: {text}"))));
        }
        serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(BackendError::Unavailable(format!("bad response body: {e}"))))
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut last = BackendError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(200 << attempt.min(6)));
            }
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(e)) => {
                    log::warn!("request to {url} failed (attempt {}): {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }

    /// Request body for one chunk. A trailing non-empty assistant message is
    /// sent as a continuation.
    pub fn request_body(&self, req: &GenerationRequest<'_>, seed: u64) -> Value {
        let mut messages: Vec<&ChatMessage> = req.messages.iter().collect();
        let continuing = match messages.last() {
            Some(m) if m.role == Role::Assistant && m.content.is_empty() => {
                messages.pop();
                false
            }
            Some(m) => m.role == Role::Assistant,
            None => false,
        };
        let s = req.sampling;
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": req.max_tokens,
            "temperature": if s.do_sample { s.temperature } else { 0.0 },
            "top_p": s.top_p,
            "top_k": s.top_k,
            "seed": seed,
            "stream": false,
        });
        if continuing {
            body["continue_final_message"] = json!(true);
            body["add_generation_prompt"] = json!(false);
        }
        body
    }
}

/// Reads text, end-of-stream flag and token usage from a completion response.
pub fn parse_completion(v: &Value) -> Result<GenerationChunk, BackendError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Unavailable("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let eos = choice.get("finish_reason").and_then(Value::as_str) != Some("length");
    let token_count = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .map(|n| n as usize)
        .unwrap_or_else(|| whitespace_tokens(&text));
    Ok(GenerationChunk { text, token_count, eos })
}

impl Backend for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn session(&self, _attempt: usize, seed: u64) -> Box<dyn Session + '_> {
        Box::new(RemoteSession {
            backend: self,
            seed,
            requests: 0,
        })
    }

    fn count_tokens(&self, text: &str) -> Option<usize> {
        let root = self.config.base_url.trim_end_matches('/').trim_end_matches("/v1");
        let body = json!({ "model": self.config.model, "prompt": text });
        let v = self.post_once(&format!("{root}/tokenize"), &body).ok()?;
        v.get("count").and_then(Value::as_u64).map(|n| n as usize)
    }
}

struct RemoteSession<'a> {
    backend: &'a RemoteBackend,
    seed: u64,
    requests: u64,
}

impl Session for RemoteSession<'_> {
    fn begin_call(&mut self) {}

    fn next_chunk(&mut self, req: &GenerationRequest<'_>) -> Result<GenerationChunk, BackendError> {
        let seed = self.seed.wrapping_add(self.requests);
        self.requests += 1;
        let body = self.backend.request_body(req, seed);
        let v = self.backend.post(&self.backend.url("chat/completions"), &body)?;
        parse_completion(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SamplingParams;

    #[test]
    fn body_forwards_sampling_verbatim() {
        let b = RemoteBackend::new(EndpointConfig::new("http://localhost:1/v1/", "m"));
        let msgs = [ChatMessage::user("u"), ChatMessage::assistant("fn main() {")];
        let sp = SamplingParams::qwen3_4b();
        let body = b.request_body(
            &GenerationRequest {
                messages: &msgs,
                sampling: &sp,
                max_tokens: 64,
            },
            9,
        );
        assert_eq!(body["temperature"], json!(0.7));
        assert_eq!(body["top_k"], json!(20));
        assert_eq!(body["top_p"], json!(0.8));
        assert_eq!(body["max_tokens"], json!(64));
        assert_eq!(body["continue_final_message"], json!(true));
        assert_eq!(body["messages"][1]["role"], json!("assistant"));
        let fresh = [ChatMessage::user("u"), ChatMessage::assistant("")];
        let body = b.request_body(
            &GenerationRequest {
                messages: &fresh,
                sampling: &sp,
                max_tokens: 8,
            },
            9,
        );
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert!(body.get("continue_final_message").is_none());
    }

    #[test]
    fn completion_parsing() {
        let v = json!({"choices":[{"message":{"content":"let x = 1;"},"finish_reason":"length"}],"usage":{"completion_tokens":6}});
        let c = parse_completion(&v).unwrap();
        assert_eq!((c.token_count, c.eos), (6, false));
        let v = json!({"choices":[{"message":{"content":"a b c"},"finish_reason":"stop"}]});
        let c = parse_completion(&v).unwrap();
        assert_eq!((c.token_count, c.eos), (3, true));
        assert!(parse_completion(&json!({})).is_err());
    }
}
