use serde::{Deserialize, Serialize};

use super::anchor::{anchor_for, DiagnosticAnchor};
use crate::oracle::{OracleReport, Verdict};
use crate::scope::{Dialect, Task};

pub const MAX_ENTRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub anchor: DiagnosticAnchor,
    pub oracle_id: String,
    pub message: String,
    pub line: usize,
    pub column: usize,
    pub first_seen_meta_step: usize,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackState {
    pub entries: Vec<FailureEntry>,
    pub max_entries: usize,
}

impl Default for FeedbackState {
    fn default() -> Self {
        FeedbackState {
            entries: Vec::new(),
            max_entries: MAX_ENTRIES,
        }
    }
}

impl FeedbackState {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Reports observed at one meta step together with the text they refer to.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackInput<'a> {
    pub reports: &'a [OracleReport],
    /// Artifact text the diagnostic positions index into.
    pub text: &'a str,
    pub dialect: Dialect,
    pub meta_step: usize,
}

/// Adds new error anchors, prunes anchors resolved by the same oracle (a pass,
/// or a failure that no longer reports them), and evicts the oldest entries
/// beyond the bound. Entries whose oracle did not report are kept.
pub fn update_feedback(state: &FeedbackState, obs: &FeedbackInput<'_>) -> FeedbackState {
    let mut next = state.clone();
    if obs.reports.is_empty() {
        return next;
    }
    let mut fresh: Vec<FailureEntry> = Vec::new();
    for r in obs.reports.iter().filter(|r| r.verdict == Verdict::Fail) {
        for d in r.errors() {
            let anchor = anchor_for(d, obs.text, obs.dialect);
            if fresh.iter().any(|e| e.anchor == anchor) {
                continue;
            }
            fresh.push(FailureEntry {
                anchor,
                oracle_id: r.oracle_id.clone(),
                message: d.message.lines().next().unwrap_or("").to_string(),
                line: d.line,
                column: d.column,
                first_seen_meta_step: obs.meta_step,
                resolved: false,
            });
        }
    }
    for e in next.entries.iter_mut() {
        let Some(r) = obs.reports.iter().find(|r| r.oracle_id == e.oracle_id) else {
            continue;
        };
        e.resolved = match r.verdict {
            Verdict::Pass => true,
            Verdict::Fail => !fresh.iter().any(|f| f.anchor == e.anchor),
            Verdict::NotApplicable => e.resolved,
        };
    }
    next.entries.retain(|e| !e.resolved);
    for f in fresh {
        match next.entries.iter_mut().find(|e| e.anchor == f.anchor) {
            Some(e) => {
                e.message = f.message;
                e.line = f.line;
                e.column = f.column;
            }
            None => next.entries.push(f),
        }
    }
    let excess = next.entries.len().saturating_sub(next.max_entries);
    next.entries.drain(..excess);
    next
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One bullet per entry, insertion order; empty state gives empty text.
pub fn encode_feedback(state: &FeedbackState) -> String {
    let mut out = String::new();
    for e in &state.entries {
        out.push_str(&format!(
            "- [{}] {} (in `{}`, line {})\n",
            e.anchor.primary_code,
            one_line(&e.message),
            e.anchor.enclosing_function,
            e.line
        ));
    }
    out
}

pub const FEEDBACK_HEADER: &str = "### Unresolved verifier diagnostics";

/// The source followed by the feedback block under a fixed header.
pub fn augment_context(source: &str, block: &str) -> String {
    let mut out = String::with_capacity(source.len() + block.len() + 48);
    out.push_str(source);
    if !source.ends_with('\n') {
        out.push('\n');
    }
    out.push('\n');
    out.push_str(FEEDBACK_HEADER);
    out.push('\n');
    if block.is_empty() {
        out.push_str("(none)\n");
    } else {
        out.push_str(block);
        if !block.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// `// FIX: CODE message` lines for splicing after a rolled-back prefix.
///
/// # Panics
/// If `entries` is empty.
pub fn render_inline_comment(entries: &[FailureEntry], _task: Task) -> String {
    assert!(!entries.is_empty(), "inline feedback needs at least one entry");
    let mut out = String::new();
    for e in entries {
        out.push_str("// FIX: ");
        out.push_str(&e.anchor.primary_code);
        out.push(' ');
        out.push_str(&one_line(&e.message));
        out.push('\n');
    }
    out
}
