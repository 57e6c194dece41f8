//! Outer-loop strategies over the naive and the verified inner loop.

mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Ablation, InnerOutcome, MetaStepRecord};
use crate::oracle::FunctionalReport;

pub use run::{
    diagnostic_text, refine_block, run_best_of_n, run_one_shot, run_s_star, run_self_refine, run_strategy,
    verify_program, CaseInput, StrategyEnv, Verification,
};

pub const DEFAULT_BUDGET_MULTIPLIER: f64 = 16.0;
pub const SSTAR_DEFAULT_N: usize = 8;
pub const SSTAR_DEFAULT_R: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    Naive,
    Dtv(Ablation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterKind {
    OneShot,
    SelfRefine,
    BestOfN(usize),
    SStar { n: usize, r: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyIdError {
    #[error("unknown strategy id `{0}`")]
    Unknown(String),
    #[error("unknown ablation flag `{0}`")]
    UnknownFlag(String),
    #[error("ablation flags only apply to dtv strategies: `{0}`")]
    FlagsOnBaseline(String),
    #[error("`{0}` needs a positive count")]
    ZeroCount(String),
}

/// An inner/outer combination, written as a stable id such as
/// `naive/bon-8`, `dtv/self-refine+no-escalation` or `sstar/n8r3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Strategy {
    pub inner: InnerKind,
    pub outer: OuterKind,
}

impl Strategy {
    pub const NAIVE_ONE_SHOT: Strategy = Strategy {
        inner: InnerKind::Naive,
        outer: OuterKind::OneShot,
    };
    pub const NAIVE_SELF_REFINE: Strategy = Strategy {
        inner: InnerKind::Naive,
        outer: OuterKind::SelfRefine,
    };
    pub const DTV_ONE_SHOT: Strategy = Strategy {
        inner: InnerKind::Dtv(Ablation {
            no_feedback: false,
            no_escalation: false,
            detect_and_abort: false,
        }),
        outer: OuterKind::OneShot,
    };
    pub const DTV_SELF_REFINE: Strategy = Strategy {
        inner: InnerKind::Dtv(Ablation {
            no_feedback: false,
            no_escalation: false,
            detect_and_abort: false,
        }),
        outer: OuterKind::SelfRefine,
    };

    pub fn bon(n: usize) -> Strategy {
        Strategy {
            inner: InnerKind::Naive,
            outer: OuterKind::BestOfN(n),
        }
    }

    pub fn s_star(n: usize, r: usize) -> Strategy {
        Strategy {
            inner: InnerKind::Naive,
            outer: OuterKind::SStar { n, r },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.inner, self.outer) {
            (_, OuterKind::SStar { n, r }) => write!(f, "sstar/n{n}r{r}"),
            (inner, outer) => {
                let (head, suffix) = match inner {
                    InnerKind::Naive => ("naive", String::new()),
                    InnerKind::Dtv(a) => ("dtv", a.suffix()),
                };
                match outer {
                    OuterKind::OneShot => write!(f, "{head}/one-shot{suffix}"),
                    OuterKind::SelfRefine => write!(f, "{head}/self-refine{suffix}"),
                    OuterKind::BestOfN(n) => write!(f, "{head}/bon-{n}{suffix}"),
                    OuterKind::SStar { .. } => unreachable!(),
                }
            }
        }
    }
}

fn count(id: &str, digits: &str) -> Result<usize, StrategyIdError> {
    let n: usize = digits.parse().map_err(|_| StrategyIdError::Unknown(id.to_string()))?;
    if n == 0 {
        return Err(StrategyIdError::ZeroCount(id.to_string()));
    }
    Ok(n)
}

impl FromStr for Strategy {
    type Err = StrategyIdError;

    fn from_str(id: &str) -> Result<Self, Self::Err> {
        let mut parts = id.split('+');
        let base = parts.next().unwrap_or_default();
        let mut ablation = Ablation::default();
        let mut flagged = false;
        for flag in parts {
            flagged = true;
            match flag {
                "no-feedback" => ablation.no_feedback = true,
                "no-escalation" => ablation.no_escalation = true,
                "detect-abort" => ablation.detect_and_abort = true,
                other => return Err(StrategyIdError::UnknownFlag(other.to_string())),
            }
        }
        let (head, tail) = base.split_once('/').ok_or_else(|| StrategyIdError::Unknown(id.to_string()))?;
        let strategy = match head {
            "sstar" => {
                let spec = tail.strip_prefix('n').ok_or_else(|| StrategyIdError::Unknown(id.to_string()))?;
                let (n, r) = spec.split_once('r').ok_or_else(|| StrategyIdError::Unknown(id.to_string()))?;
                Strategy::s_star(count(id, n)?, count(id, r)?)
            }
            "naive" | "dtv" => {
                let outer = match tail {
                    "one-shot" => OuterKind::OneShot,
                    "self-refine" => OuterKind::SelfRefine,
                    t if head == "naive" && t.starts_with("bon-") => OuterKind::BestOfN(count(id, &t[4..])?),
                    _ => return Err(StrategyIdError::Unknown(id.to_string())),
                };
                let inner = if head == "naive" {
                    InnerKind::Naive
                } else {
                    InnerKind::Dtv(ablation)
                };
                Strategy { inner, outer }
            }
            _ => return Err(StrategyIdError::Unknown(id.to_string())),
        };
        if flagged && !matches!(strategy.inner, InnerKind::Dtv(_)) {
            return Err(StrategyIdError::FlagsOnBaseline(id.to_string()));
        }
        Ok(strategy)
    }
}

impl TryFrom<String> for Strategy {
    type Error = StrategyIdError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub budget_multiplier: f64,
    /// New-token cap for one naive round and for one generation call of the
    /// verified loop.
    pub per_round_cap: usize,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, per_round_cap: usize) -> Self {
        StrategyConfig {
            strategy,
            budget_multiplier: DEFAULT_BUDGET_MULTIPLIER,
            per_round_cap,
        }
    }

    /// Per-case generation budget.
    pub fn budget(&self, source_tokens: usize) -> usize {
        (self.budget_multiplier * source_tokens as f64).ceil() as usize
    }
}

/// A diagnostic's code together with its anchor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Emission {
    pub code: String,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerDigest {
    pub outcome: InnerOutcome,
    pub meta_steps: usize,
    pub rollbacks: usize,
    pub tokens_discarded: usize,
    /// Every failing diagnostic observed inside the loop.
    pub emissions: Vec<Emission>,
}

/// One generation round and its outer-loop verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDigest {
    /// 1-based within its candidate.
    pub round: usize,
    pub candidate: usize,
    pub attempt: usize,
    pub seed: u64,
    pub passed: bool,
    pub tokens: usize,
    pub error_count: usize,
    pub emissions: Vec<Emission>,
    /// Tool-style rendering of the outer diagnostics.
    pub diagnostic_text: String,
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<InnerDigest>,
}

impl RoundDigest {
    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.emissions.iter().map(|e| e.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Completed,
    InfraFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub strategy: String,
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infra_error: Option<String>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_round: Option<usize>,
    pub tokens_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_at_first_pass: Option<usize>,
    pub rounds: usize,
    pub source_tokens: usize,
    pub budget: usize,
    pub program: String,
    pub history: Vec<RoundDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalReport>,
}

impl CaseOutcome {
    /// Generated tokens over source tokens.
    pub fn k(&self) -> f64 {
        self.tokens_total as f64 / self.source_tokens.max(1) as f64
    }

    pub fn k_at_first_pass(&self) -> Option<f64> {
        self.tokens_at_first_pass.map(|t| t as f64 / self.source_tokens.max(1) as f64)
    }

    pub fn is_infra_failure(&self) -> bool {
        self.kind == OutcomeKind::InfraFailure
    }
}

/// Per-case event stream emitted by a strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StrategyEvent {
    RoundStart {
        candidate: usize,
        round: usize,
        attempt: usize,
        seed: u64,
        /// Tokens this round may spend.
        allowance: usize,
        /// Largest single generation request.
        chunk_cap: usize,
        dtv: bool,
    },
    MetaStep {
        attempt: usize,
        record: MetaStepRecord,
    },
    RoundEnd {
        attempt: usize,
        passed: bool,
        tokens: usize,
        error_count: usize,
        program: String,
    },
    Selected {
        candidate: usize,
        attempt: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub outcome: CaseOutcome,
    pub events: Vec<StrategyEvent>,
}
