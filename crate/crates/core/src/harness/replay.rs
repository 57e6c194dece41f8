//! Event-sourced reconstruction of a case from its trace, with invariant
//! checks over the event stream.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::trace::{parse_trace, read_trace, Trace, TraceError};
use crate::controller::ActionKind;
use crate::feedback::RetryMode;
use crate::oracle::Verdict;
use crate::scope::ScopeLevel;
use crate::strategy::StrategyEvent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("commit without a passing verdict")]
    IllegalCommit,
    #[error("rollback to unknown checkpoint {0}")]
    UnknownCheckpoint(usize),
    #[error("{action:?} record without a checkpoint id")]
    MissingCheckpoint { action: ActionKind },
    #[error("tokens_used went from {before} to {after}")]
    TokensDecreased { before: usize, after: usize },
    #[error("attempt used {used} tokens, allowance {allowance} plus {chunk_cap}")]
    RoundOverBudget { used: usize, allowance: usize, chunk_cap: usize },
    #[error("case used {used} tokens, budget {budget} plus {cap}")]
    CaseOverBudget { used: usize, budget: usize, cap: usize },
    #[error("anchor `{anchor}` went from {from} back to {to}")]
    EscalationRegressed { anchor: String, from: String, to: String },
    #[error("attempt {attempt}: replayed program differs from the recorded one")]
    ProgramMismatch { attempt: usize },
    #[error("event for attempt {attempt} outside its round")]
    OutsideRound { attempt: usize },
    #[error("selected attempt {attempt} has no recorded program")]
    UnknownSelection { attempt: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("seq {seq}: {violation}")]
pub struct InvariantViolation {
    pub seq: usize,
    pub violation: Violation,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub case_id: String,
    pub program: String,
    pub rounds: usize,
    pub meta_steps: usize,
    pub rollbacks: usize,
    pub tokens_total: usize,
}

struct OpenRound {
    attempt: usize,
    allowance: usize,
    chunk_cap: usize,
    dtv: bool,
    text: String,
    checkpoints: BTreeMap<usize, String>,
    last_used: usize,
    rungs: BTreeMap<String, (ScopeLevel, RetryMode)>,
}

fn rung_name(r: (ScopeLevel, RetryMode)) -> String {
    format!("{}/{}", r.0.as_str(), r.1.as_str())
}

pub fn replay(trace: &Trace) -> Result<ReplayReport, InvariantViolation> {
    let header = &trace.header;
    let mut open: Option<OpenRound> = None;
    let mut programs: BTreeMap<usize, String> = BTreeMap::new();
    let mut last_program = None;
    let mut selected = None;
    let mut report = ReplayReport {
        case_id: header.case_id.clone(),
        program: String::new(),
        rounds: 0,
        meta_steps: 0,
        rollbacks: 0,
        tokens_total: 0,
    };
    let fail = |seq, violation| Err(InvariantViolation { seq, violation });

    for ev in &trace.events {
        let seq = ev.seq;
        match &ev.event {
            StrategyEvent::RoundStart {
                attempt,
                allowance,
                chunk_cap,
                dtv,
                ..
            } => {
                let mut checkpoints = BTreeMap::new();
                checkpoints.insert(0, String::new());
                open = Some(OpenRound {
                    attempt: *attempt,
                    allowance: *allowance,
                    chunk_cap: *chunk_cap,
                    dtv: *dtv,
                    text: String::new(),
                    checkpoints,
                    last_used: 0,
                    rungs: BTreeMap::new(),
                });
            }
            StrategyEvent::MetaStep { attempt, record } => {
                let Some(r) = open.as_mut().filter(|r| r.attempt == *attempt) else {
                    return fail(seq, Violation::OutsideRound { attempt: *attempt });
                };
                report.meta_steps += 1;
                if record.tokens_used < r.last_used {
                    return fail(
                        seq,
                        Violation::TokensDecreased {
                            before: r.last_used,
                            after: record.tokens_used,
                        },
                    );
                }
                r.last_used = record.tokens_used;
                if record.tokens_used > r.allowance + r.chunk_cap {
                    return fail(
                        seq,
                        Violation::RoundOverBudget {
                            used: record.tokens_used,
                            allowance: r.allowance,
                            chunk_cap: r.chunk_cap,
                        },
                    );
                }
                r.text.push_str(&record.appended);
                match record.action.action {
                    ActionKind::Commit => {
                        if record.verdict == Verdict::Fail {
                            return fail(seq, Violation::IllegalCommit);
                        }
                        let Some(id) = record.checkpoint_id else {
                            return fail(seq, Violation::MissingCheckpoint { action: ActionKind::Commit });
                        };
                        r.checkpoints.insert(id, r.text.clone());
                    }
                    ActionKind::Rollback => {
                        report.rollbacks += 1;
                        let Some(id) = record.checkpoint_id else {
                            return fail(seq, Violation::MissingCheckpoint { action: ActionKind::Rollback });
                        };
                        let Some(base) = r.checkpoints.get(&id).cloned() else {
                            return fail(seq, Violation::UnknownCheckpoint(id));
                        };
                        r.checkpoints.retain(|k, _| *k <= id);
                        r.text = base + record.resume.as_deref().unwrap_or("");
                        if let (Some(anchor), Some(scope), Some(mode)) =
                            (&record.anchor, record.action.scope, record.action.mode)
                        {
                            let now = (scope, mode);
                            if let Some(prev) = r.rungs.get(anchor) {
                                if now < *prev {
                                    return fail(
                                        seq,
                                        Violation::EscalationRegressed {
                                            anchor: anchor.clone(),
                                            from: rung_name(*prev),
                                            to: rung_name(now),
                                        },
                                    );
                                }
                            }
                            r.rungs.insert(anchor.clone(), now);
                        }
                    }
                    _ => {}
                }
            }
            StrategyEvent::RoundEnd {
                attempt,
                tokens,
                program,
                ..
            } => {
                let Some(r) = open.take().filter(|r| r.attempt == *attempt) else {
                    return fail(seq, Violation::OutsideRound { attempt: *attempt });
                };
                if r.dtv && r.text != *program {
                    return fail(seq, Violation::ProgramMismatch { attempt: *attempt });
                }
                if r.dtv && *tokens > r.allowance + r.chunk_cap {
                    return fail(
                        seq,
                        Violation::RoundOverBudget {
                            used: *tokens,
                            allowance: r.allowance,
                            chunk_cap: r.chunk_cap,
                        },
                    );
                }
                report.rounds += 1;
                report.tokens_total += tokens;
                if report.tokens_total > header.budget + header.per_round_cap {
                    return fail(
                        seq,
                        Violation::CaseOverBudget {
                            used: report.tokens_total,
                            budget: header.budget,
                            cap: header.per_round_cap,
                        },
                    );
                }
                programs.insert(*attempt, program.clone());
                last_program = Some(program.clone());
            }
            StrategyEvent::Selected { attempt, .. } => {
                if !programs.contains_key(attempt) {
                    return fail(seq, Violation::UnknownSelection { attempt: *attempt });
                }
                selected = Some(*attempt);
            }
        }
    }
    report.program = match selected {
        Some(a) => programs[&a].clone(),
        None => last_program.unwrap_or_default(),
    };
    Ok(report)
}

pub fn parse_and_replay(text: &str) -> Result<ReplayReport, ReplayError> {
    Ok(replay(&parse_trace(text)?)?)
}

pub fn replay_trace(path: &Path) -> Result<ReplayReport, ReplayError> {
    Ok(replay(&read_trace(path)?)?)
}
