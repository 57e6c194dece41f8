//! The decoding controller: meta steps, commit and rollback decisions,
//! escalation, bailout and budget accounting.

mod run;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::SamplingParams;
use crate::feedback::{anchor_for, DiagnosticAnchor, FeedbackState, LadderCursor, RetryLadder, RetryMode};
use crate::oracle::{Diagnostic, OracleReport, OracleSpec, Toolchain, Verdict};
use crate::scope::{Dialect, ScopeLevel, Task};

pub use run::{run_inner, InnerCase};

pub const DEFAULT_MAX_STEPS: usize = 2000;
pub const DEFAULT_CHUNK_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    #[serde(default)]
    pub no_feedback: bool,
    #[serde(default)]
    pub no_escalation: bool,
    #[serde(default)]
    pub detect_and_abort: bool,
}

impl Ablation {
    pub fn is_none(&self) -> bool {
        *self == Ablation::default()
    }

    /// Strategy-id suffix, empty without flags.
    pub fn suffix(&self) -> String {
        let mut s = String::new();
        if self.no_feedback {
            s.push_str("+no-feedback");
        }
        if self.no_escalation {
            s.push_str("+no-escalation");
        }
        if self.detect_and_abort {
            s.push_str("+detect-abort");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub ladder: RetryLadder,
    pub ablation: Ablation,
    /// Generation-token budget for the inner loop.
    pub budget: usize,
    pub max_steps: usize,
    pub chunk_size: usize,
    /// Cap on new tokens per generation call.
    pub max_new: usize,
    /// Cap on tokens per patch reply.
    pub reply_cap: usize,
    pub sampling: SamplingParams,
}

impl InnerConfig {
    pub fn new(task: Task, budget: usize) -> Self {
        InnerConfig {
            ladder: RetryLadder::default(),
            ablation: Ablation::default(),
            budget,
            max_steps: DEFAULT_MAX_STEPS,
            chunk_size: DEFAULT_CHUNK_SIZE,
            max_new: default_max_new(task),
            reply_cap: 1024,
            sampling: SamplingParams::default(),
        }
    }
}

/// Per-round new-token cap.
pub fn default_max_new(task: Task) -> usize {
    match task {
        Task::CToRust => 2048,
        Task::JsToTs => 16384,
    }
}

/// Folds ablation flags into a config. `no_escalation` pins every rung to
/// statement-scope inline retries with the same total count.
pub fn apply_ablation(config: &InnerConfig, flags: Ablation) -> InnerConfig {
    let mut out = config.clone();
    out.ablation = flags;
    if flags.no_escalation {
        out.ladder = config.ladder.clamped_to_stmt();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Generate,
    Verify,
    Commit,
    Rollback,
    Feedback,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerAction {
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<ScopeLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RetryMode>,
    #[serde(default)]
    pub bailout: bool,
}

impl ControllerAction {
    pub fn commit() -> Self {
        ControllerAction {
            action: ActionKind::Commit,
            scope: None,
            mode: None,
            bailout: false,
        }
    }

    pub fn rollback(scope: ScopeLevel, mode: RetryMode) -> Self {
        ControllerAction {
            action: ActionKind::Rollback,
            scope: Some(scope),
            mode: Some(mode),
            bailout: false,
        }
    }

    pub fn terminate(bailout: bool) -> Self {
        ControllerAction {
            action: ActionKind::Terminate,
            scope: None,
            mode: None,
            bailout,
        }
    }
}

/// What `decide` sees at a failing boundary.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Candidate prefix the reports refer to.
    pub prefix: &'a str,
    pub reports: &'a [OracleReport],
    pub feedback: &'a FeedbackState,
    pub dialect: Dialect,
    pub tokens_used: usize,
    pub tokens_budget: usize,
}

/// Per-anchor visit counts and ladder cursors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecisionState {
    pub visits: BTreeMap<DiagnosticAnchor, usize>,
    pub cursors: BTreeMap<DiagnosticAnchor, LadderCursor>,
}

/// First primary error of the first failing report (reports are in oracle
/// order), falling back to its first error.
pub fn active_diagnostic(reports: &[OracleReport]) -> Option<&Diagnostic> {
    let failing = reports.iter().find(|r| r.verdict == Verdict::Fail)?;
    failing.errors().find(|d| d.primary).or_else(|| failing.errors().next())
}

impl DecisionState {
    fn take(&mut self, anchor: &DiagnosticAnchor, ladder: &RetryLadder) -> ControllerAction {
        let cursor = self.cursors.entry(anchor.clone()).or_default();
        match cursor.take(ladder) {
            Some(rung) => {
                let mode = if rung.scope == ScopeLevel::Func {
                    RetryMode::Inline
                } else {
                    rung.mode
                };
                ControllerAction::rollback(rung.scope, mode)
            }
            None => ControllerAction::terminate(true),
        }
    }

    /// After a rejected patch: abandon the anchor's current rung and pick again
    /// without counting a new visit.
    pub fn escalate(&mut self, anchor: &DiagnosticAnchor, ladder: &RetryLadder) -> ControllerAction {
        self.cursors.entry(anchor.clone()).or_default().escalate();
        self.take(anchor, ladder)
    }
}

/// Chooses the action for a failing boundary and returns it with the active
/// anchor.
pub fn decide(
    obs: &Observation<'_>,
    state: &mut DecisionState,
    ladder: &RetryLadder,
    ablation: Ablation,
) -> (ControllerAction, Option<DiagnosticAnchor>) {
    let Some(d) = active_diagnostic(obs.reports) else {
        return (ControllerAction::terminate(true), None);
    };
    let anchor = anchor_for(d, obs.prefix, obs.dialect);
    *state.visits.entry(anchor.clone()).or_default() += 1;
    if ablation.detect_and_abort {
        return (ControllerAction::terminate(true), Some(anchor));
    }
    let action = state.take(&anchor, ladder);
    (action, Some(anchor))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerState {
    pub meta_step: usize,
    /// Every generated token, including those later discarded.
    pub tokens_used: usize,
    pub tokens_discarded: usize,
    pub seed: u64,
}

impl ControllerState {
    pub fn new(seed: u64) -> Self {
        ControllerState {
            meta_step: 0,
            tokens_used: 0,
            tokens_discarded: 0,
            seed,
        }
    }

    /// Generated tokens are charged when produced; `discarded` only annotates
    /// tokens a rollback throws away.
    pub fn charge_budget(&mut self, generated: usize, discarded: usize) {
        self.tokens_used += generated;
        self.tokens_discarded += discarded;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerOutcome {
    Success,
    Bailout,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticDigest {
    pub oracle: String,
    pub code: String,
    pub line: usize,
    pub column: usize,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaStepRecord {
    pub k: usize,
    pub action: ControllerAction,
    /// Level of the boundary that was verified; `None` when generation stopped
    /// without one.
    pub boundary: Option<ScopeLevel>,
    pub verdict: Verdict,
    pub diagnostics: Vec<DiagnosticDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    pub tokens_generated: usize,
    pub tokens_discarded: usize,
    pub tokens_used: usize,
    /// Commit: the new checkpoint. Rollback: the restored one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<usize>,
    /// Text appended to the live prefix before verification.
    pub appended: String,
    /// Rollback: text following the restored checkpoint's prefix afterwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patch_rejections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub outcome: InnerOutcome,
    pub artifact: String,
    pub outstanding: Vec<Diagnostic>,
    pub trace: Vec<MetaStepRecord>,
    pub tokens_used: usize,
    pub tokens_discarded: usize,
}

impl InnerResult {
    pub fn rollbacks(&self) -> impl Iterator<Item = &MetaStepRecord> {
        self.trace.iter().filter(|r| r.action.action == ActionKind::Rollback)
    }

    pub fn succeeded(&self) -> bool {
        self.outcome == InnerOutcome::Success
    }
}

/// Oracles consulted inside the loop.
#[derive(Debug, Clone, Copy)]
pub struct OracleEnv<'a> {
    pub specs: &'a [OracleSpec],
    pub tools: &'a Toolchain,
    pub workdir: &'a Path,
}
