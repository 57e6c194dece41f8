use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, EndpointConfig, RemoteBackend, SamplingParams, ScriptedBackend, ScriptedFixture};
use crate::controller::{default_max_new, InnerConfig, DEFAULT_CHUNK_SIZE, DEFAULT_MAX_STEPS};
use crate::feedback::RetryLadder;
use crate::oracle::{default_suite, OracleSpec, Stage, Toolchain};
use crate::scope::Task;
use crate::strategy::{Strategy, StrategyConfig, DEFAULT_BUDGET_MULTIPLIER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Replays `{fixtures}/{case_id}.json`; cases without a fixture produce
    /// empty output.
    Scripted { fixtures: PathBuf },
    Remote(EndpointConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSettings {
    pub chunk_size: usize,
    pub max_steps: usize,
    pub reply_cap: usize,
    pub ladder: RetryLadder,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            chunk_size: DEFAULT_CHUNK_SIZE,
            max_steps: DEFAULT_MAX_STEPS,
            reply_cap: 1024,
            ladder: RetryLadder::default(),
        }
    }
}

fn default_multiplier() -> f64 {
    DEFAULT_BUDGET_MULTIPLIER
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_resamples() -> usize {
    crate::stats::DEFAULT_RESAMPLES
}

/// One run: a strategy applied to a corpus. Every field except `strategy`,
/// `task` and `backend` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub task: Task,
    pub backend: BackendConfig,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_multiplier")]
    pub budget_multiplier: f64,
    /// Defaults to 2048 new tokens for C to Rust and 16384 for JS to TS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_round_cap: Option<usize>,
    #[serde(default)]
    pub inner: InnerSettings,
    /// Defaults to the task's in-loop suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inloop_oracles: Option<Vec<OracleSpec>>,
    /// Defaults to the task's outer-loop suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_oracles: Option<Vec<OracleSpec>>,
    #[serde(default)]
    pub tools: Toolchain,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Case-level worker count; the rayon default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Differential testing of passing C to Rust translations.
    #[serde(default)]
    pub functional: bool,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("cannot serialise config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl RunConfig {
    pub fn new(strategy: Strategy, task: Task, backend: BackendConfig) -> Self {
        RunConfig {
            strategy,
            task,
            backend,
            sampling: SamplingParams::default(),
            budget_multiplier: DEFAULT_BUDGET_MULTIPLIER,
            per_round_cap: None,
            inner: InnerSettings::default(),
            inloop_oracles: None,
            outer_oracles: None,
            tools: Toolchain::default(),
            seed: 0,
            output: default_output(),
            workers: None,
            functional: false,
            bootstrap_resamples: default_resamples(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Environment overrides: `DTV_ENDPOINT` and `DTV_MODEL` for a remote
    /// backend, plus the toolchain variables.
    pub fn with_env_overrides(mut self) -> Self {
        if let BackendConfig::Remote(ep) = &mut self.backend {
            if let Ok(v) = std::env::var("DTV_ENDPOINT") {
                if !v.is_empty() {
                    ep.base_url = v.trim_end_matches('/').to_string();
                }
            }
            if let Ok(v) = std::env::var("DTV_MODEL") {
                if !v.is_empty() {
                    ep.model = v;
                }
            }
        }
        self.tools = self.tools.clone().with_env_overrides();
        self
    }

    pub fn per_round_cap(&self) -> usize {
        self.per_round_cap.unwrap_or_else(|| default_max_new(self.task))
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy,
            budget_multiplier: self.budget_multiplier,
            per_round_cap: self.per_round_cap(),
        }
    }

    pub fn inner_config(&self) -> InnerConfig {
        let mut c = InnerConfig::new(self.task, 0);
        c.ladder = self.inner.ladder.clone();
        c.max_steps = self.inner.max_steps;
        c.chunk_size = self.inner.chunk_size;
        c.reply_cap = self.inner.reply_cap;
        c.max_new = self.per_round_cap();
        c.sampling = self.sampling;
        c
    }

    pub fn inloop_suite(&self) -> Vec<OracleSpec> {
        self.inloop_oracles
            .clone()
            .unwrap_or_else(|| default_suite(self.task, Stage::InLoop))
    }

    pub fn outer_suite(&self) -> Vec<OracleSpec> {
        self.outer_oracles
            .clone()
            .unwrap_or_else(|| default_suite(self.task, Stage::OuterLoop))
    }
}

/// Backend for one case.
pub fn case_backend(config: &BackendConfig, case_id: &str) -> Box<dyn Backend> {
    match config {
        BackendConfig::Scripted { fixtures } => {
            let fixture = ScriptedFixture::load(&fixtures.join(format!("{case_id}.json"))).unwrap_or_default();
            Box::new(ScriptedBackend::new(fixture))
        }
        BackendConfig::Remote(ep) => Box::new(RemoteBackend::new(ep.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_fills_defaults_and_round_trips() {
        let c = RunConfig::from_toml(
            r#"
strategy = "dtv/self-refine"
task = "c-to-rust"
[backend]
kind = "remote"
base_url = "http://localhost:8000/v1"
model = "qwen3-4b"
"#,
        )
        .unwrap();
        assert_eq!(c.strategy, Strategy::DTV_SELF_REFINE);
        assert_eq!(c.per_round_cap(), 2048);
        assert_eq!(c.budget_multiplier, 16.0);
        assert_eq!(c.inner.ladder, RetryLadder::default());
        assert_eq!(c.inloop_suite().len(), 1);
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn scripted_backend_and_custom_oracles_round_trip() {
        let mut c = RunConfig::new(
            "sstar/n8r3".parse().unwrap(),
            Task::JsToTs,
            BackendConfig::Scripted {
                fixtures: PathBuf::from("fx"),
            },
        );
        c.outer_oracles = Some(vec![crate::selftest::outer_stub()]);
        c.workers = Some(3);
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.per_round_cap(), 16384);
    }
}
