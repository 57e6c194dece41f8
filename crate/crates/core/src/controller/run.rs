use crate::backend::{generate_reply, generate_to_boundary, BackendError, CallLimits, ChatMessage, Session, Stop};
use crate::checkpoint::CheckpointLog;
use crate::feedback::{
    anchor_for, augment_context, build_patch_turn, encode_feedback, render_inline_comment, update_feedback,
    validate_and_apply_patch, FeedbackInput, FeedbackState, LineWindow, RetryMode,
};
use crate::oracle::{combine_verdicts, invoke_oracle, Diagnostic, OracleReport, Verdict};
use crate::render::{last_char_position, render};
use crate::scanner::GroupStack;
use crate::scope::{ScopeLevel, Task};

use super::{
    decide, ActionKind, ControllerAction, ControllerState, DecisionState, DiagnosticDigest, InnerConfig,
    InnerOutcome, InnerResult, MetaStepRecord, Observation, OracleEnv,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerCase<'a> {
    pub task: Task,
    pub source: &'a str,
    /// User message the feedback block is appended to.
    pub context: &'a str,
}

fn scanner_report(code: &str, message: &str, text: &str) -> OracleReport {
    let at = last_char_position(text);
    OracleReport::from_diagnostics(
        "scanner",
        vec![Diagnostic::error(code, message, at.line, at.column.max(1))],
        0,
    )
}

fn digest(reports: &[OracleReport], text: &str, task: Task) -> Vec<DiagnosticDigest> {
    reports
        .iter()
        .flat_map(|r| {
            r.errors().map(move |d| DiagnosticDigest {
                oracle: r.oracle_id.clone(),
                code: d.code.clone(),
                line: d.line,
                column: d.column,
                anchor: anchor_for(d, text, task.dialect()).to_string(),
            })
        })
        .collect()
}

/// Lines of `text` after the first `committed` bytes. A line only partly
/// committed stays in the window unless the committed part ends it.
fn patch_window(text: &str, committed: usize) -> (LineWindow, String) {
    let mut start = text[..committed].matches('\n').count() + 1;
    if text[committed..].starts_with('\n') {
        start += 1;
    }
    let total = text.lines().count().max(1);
    let body: Vec<&str> = text.lines().skip(start - 1).collect();
    (
        LineWindow {
            start,
            end: total.max(start),
        },
        body.join("\n"),
    )
}

struct Live {
    text: String,
    stack: GroupStack,
    /// Generated tokens behind `text` since the root.
    tokens: usize,
}

/// Runs the decode-verify-rollback loop for one attempt.
pub fn run_inner(
    case: &InnerCase<'_>,
    session: &mut dyn Session,
    oracles: &OracleEnv<'_>,
    cfg: &InnerConfig,
    seed: u64,
) -> Result<InnerResult, BackendError> {
    let dialect = case.task.dialect();
    let mut state = ControllerState::new(seed);
    let mut decisions = DecisionState::default();
    let mut feedback = FeedbackState::default();
    let mut checkpoints = CheckpointLog::new(dialect);
    let mut live = Live {
        text: String::new(),
        stack: GroupStack::new(dialect),
        tokens: 0,
    };
    let mut pending_verify = false;
    let mut trace: Vec<MetaStepRecord> = Vec::new();
    let mut outstanding: Vec<Diagnostic> = Vec::new();
    let no_feedback = cfg.ablation.no_feedback;

    let finish = |outcome, live: &Live, outstanding, trace, state: &ControllerState| InnerResult {
        outcome,
        artifact: live.text.clone(),
        outstanding,
        trace,
        tokens_used: state.tokens_used,
        tokens_discarded: state.tokens_discarded,
    };

    loop {
        if state.tokens_used >= cfg.budget || state.meta_step >= cfg.max_steps {
            return Ok(finish(InnerOutcome::BudgetExhausted, &live, outstanding, trace, &state));
        }
        state.meta_step += 1;
        let k = state.meta_step;
        let block = if no_feedback { String::new() } else { encode_feedback(&feedback) };
        let context = [ChatMessage::user(augment_context(case.context, &block))];

        let (appended, generated, stop) = if pending_verify {
            pending_verify = false;
            let b = live.stack.last_boundary().expect("patched text ends at a boundary");
            (String::new(), 0, Stop::Boundary(b))
        } else {
            let limits = CallLimits {
                chunk_size: cfg.chunk_size,
                max_new: cfg.max_new,
                remaining: cfg.budget - state.tokens_used,
            };
            let g = generate_to_boundary(session, &context, &live.text, &live.stack, &cfg.sampling, limits)?;
            state.charge_budget(g.token_count, 0);
            live.text.push_str(&g.text);
            live.stack = g.stack;
            live.tokens += g.token_count;
            (g.text, g.token_count, g.stop)
        };

        let mut record = MetaStepRecord {
            k,
            action: ControllerAction::commit(),
            boundary: None,
            verdict: Verdict::Fail,
            diagnostics: Vec::new(),
            anchor: None,
            tokens_generated: generated,
            tokens_discarded: 0,
            tokens_used: state.tokens_used,
            checkpoint_id: None,
            appended,
            resume: None,
            patch_rejections: Vec::new(),
        };

        let reports = match stop {
            Stop::Boundary(b) => {
                record.boundary = Some(b.level);
                let artifact = render(case.source, &live.text, &live.stack, case.task)
                    .expect("generation stops exactly at a boundary");
                oracles
                    .specs
                    .iter()
                    .map(|s| invoke_oracle(s, &artifact, oracles.workdir, oracles.tools))
                    .collect::<Vec<_>>()
            }
            Stop::Cap if state.tokens_used >= cfg.budget => {
                record.action = ControllerAction::terminate(false);
                trace.push(record);
                return Ok(finish(InnerOutcome::BudgetExhausted, &live, outstanding, trace, &state));
            }
            Stop::Cap => vec![scanner_report(
                "scan.no_boundary",
                "generation cap reached before a structural boundary",
                &live.text,
            )],
            Stop::Eos => vec![scanner_report(
                "scan.incomplete",
                "output ended before the program was complete",
                &live.text,
            )],
            Stop::Poisoned => vec![scanner_report(
                "scan.unbalanced_close",
                "closing delimiter without a matching opening",
                &live.text,
            )],
        };
        let verdict = combine_verdicts(&reports);
        record.verdict = verdict;
        record.diagnostics = digest(&reports, &live.text, case.task);
        feedback = update_feedback(
            &feedback,
            &FeedbackInput {
                reports: &reports,
                text: &live.text,
                dialect,
                meta_step: k,
            },
        );

        if verdict != Verdict::Fail {
            let id = checkpoints.make_checkpoint(&live.text, &live.stack, live.tokens, k);
            record.checkpoint_id = Some(id);
            outstanding.clear();
            let level = record.boundary;
            trace.push(record);
            if level == Some(ScopeLevel::Program) {
                return Ok(finish(InnerOutcome::Success, &live, outstanding, trace, &state));
            }
            continue;
        }

        outstanding = reports.iter().flat_map(|r| r.errors().cloned()).collect();
        let obs = Observation {
            prefix: &live.text,
            reports: &reports,
            feedback: &feedback,
            dialect,
            tokens_used: state.tokens_used,
            tokens_budget: cfg.budget,
        };
        let (mut action, anchor) = decide(&obs, &mut decisions, &cfg.ladder, cfg.ablation);
        record.anchor = anchor.as_ref().map(ToString::to_string);

        loop {
            if action.action == ActionKind::Terminate {
                record.action = action;
                trace.push(record);
                return Ok(finish(InnerOutcome::Bailout, &live, outstanding, trace, &state));
            }
            let scope = action.scope.expect("rollback carries a scope");
            let target = checkpoints.rollback_target(&live.stack, scope).clone();

            if action.mode == Some(RetryMode::Patch) && !no_feedback {
                let (window, window_text) = patch_window(&live.text, target.prefix.len());
                let turn = build_patch_turn(&feedback.entries, &window_text, window.start);
                let messages = [
                    context[0].clone(),
                    ChatMessage::assistant(live.text.clone()),
                    ChatMessage::user(turn),
                ];
                let limits = CallLimits {
                    chunk_size: cfg.chunk_size,
                    max_new: cfg.reply_cap,
                    remaining: cfg.budget.saturating_sub(state.tokens_used),
                };
                let reply = if limits.remaining == 0 {
                    Default::default()
                } else {
                    generate_reply(session, &messages, &cfg.sampling, limits)?
                };
                state.charge_budget(reply.token_count, 0);
                record.tokens_generated += reply.token_count;
                let applied = validate_and_apply_patch(&live.text, &reply.text, window)
                    .map_err(|r| r.kind().to_string())
                    .and_then(|patched| {
                        if !patched.starts_with(&target.prefix) {
                            return Err("out_of_window".to_string());
                        }
                        let mut stack = target.stack.clone();
                        stack.feed(&patched[target.prefix.len()..]);
                        if stack.at_boundary() {
                            Ok((patched, stack))
                        } else {
                            Err("not_at_boundary".to_string())
                        }
                    });
                match applied {
                    Ok((patched, stack)) => {
                        let discarded = live.tokens - target.tokens_committed;
                        state.charge_budget(0, discarded);
                        record.tokens_discarded = discarded;
                        record.resume = Some(patched[target.prefix.len()..].to_string());
                        checkpoints.truncate_after(target.id);
                        live = Live {
                            text: patched,
                            stack,
                            tokens: target.tokens_committed + reply.token_count,
                        };
                        pending_verify = true;
                    }
                    Err(why) => {
                        record.patch_rejections.push(why);
                        let anchor = anchor.as_ref().expect("a failing report has an anchor");
                        action = decisions.escalate(anchor, &cfg.ladder);
                        continue;
                    }
                }
            } else {
                let mut splice = String::new();
                if !no_feedback && !feedback.is_empty() {
                    if !target.prefix.is_empty() && !target.prefix.ends_with('\n') {
                        splice.push('\n');
                    }
                    splice.push_str(&render_inline_comment(&feedback.entries, case.task));
                }
                let discarded = live.tokens - target.tokens_committed;
                state.charge_budget(0, discarded);
                record.tokens_discarded = discarded;
                let mut stack = target.stack.clone();
                stack.feed(&splice);
                checkpoints.truncate_after(target.id);
                live = Live {
                    text: format!("{}{}", target.prefix, splice),
                    stack,
                    tokens: target.tokens_committed,
                };
                record.resume = Some(splice);
            }
            record.action = action;
            record.checkpoint_id = Some(target.id);
            record.tokens_used = state.tokens_used;
            trace.push(record);
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_starts_after_committed_line() {
        let text = "fn main() {\n    let a = 1;\n    let b = q;";
        let (w, body) = patch_window(text, "fn main() {\n    let a = 1;".len());
        assert_eq!((w.start, w.end), (3, 3));
        assert_eq!(body, "    let b = q;");
        let (w, _) = patch_window("fn main() { let a = 1; let b = q;", 22);
        assert_eq!((w.start, w.end), (1, 1));
    }
}
