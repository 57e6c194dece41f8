use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backend::{generate_reply, Backend, BackendError, CallLimits, ChatMessage};
use crate::controller::{apply_ablation, run_inner, InnerCase, InnerConfig, OracleEnv};
use crate::feedback::{anchor_for, encode_feedback, update_feedback, FeedbackInput, FeedbackState};
use crate::oracle::{combine_verdicts, invoke_oracle, Diagnostic, OracleReport, OracleSpec, Toolchain, Verdict};
use crate::par::{map_range, Parallelism};
use crate::prompt::{extract_program, refine_context, translation_context};
use crate::render::{last_char_position, RenderedArtifact};
use crate::scanner::GroupStack;
use crate::scope::{Dialect, Task};

use super::{
    CaseOutcome, Emission, InnerDigest, InnerKind, OuterKind, OutcomeKind, RoundDigest, RunOutput, StrategyConfig,
    StrategyEvent,
};

#[derive(Debug, Clone, Copy)]
pub struct CaseInput<'a> {
    pub id: &'a str,
    pub task: Task,
    pub source: &'a str,
    pub source_tokens: usize,
}

/// Everything a strategy needs besides the case itself.
#[derive(Clone, Copy)]
pub struct StrategyEnv<'a> {
    pub backend: &'a dyn Backend,
    pub inloop: &'a [OracleSpec],
    pub outer: &'a [OracleSpec],
    pub tools: &'a Toolchain,
    pub workdir: &'a Path,
    pub base_seed: u64,
    /// Template for the verified loop; its budget is set per round.
    pub inner: &'a InnerConfig,
    pub parallelism: Parallelism,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub verdict: Verdict,
    pub reports: Vec<OracleReport>,
    pub error_count: usize,
    /// Set when a verifier could not run at all.
    pub infra: Option<String>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Outer-loop check of a finished program. A program the scanner does not
/// see as complete fails regardless of the oracles.
pub fn verify_program(task: Task, program: &str, env: &OracleEnv<'_>) -> Verification {
    let artifact = RenderedArtifact::complete(program, task);
    let mut reports: Vec<OracleReport> = env
        .specs
        .iter()
        .map(|s| invoke_oracle(s, &artifact, env.workdir, env.tools))
        .collect();
    let (mut stack, _) = GroupStack::scan(task.dialect(), program);
    if stack.finish().is_none() {
        let at = last_char_position(program);
        reports.push(OracleReport::from_diagnostics(
            "scanner",
            vec![Diagnostic::error(
                "scan.incomplete",
                "program is structurally incomplete",
                at.line,
                at.column.max(1),
            )],
            0,
        ));
    }
    let infra = reports
        .iter()
        .flat_map(|r| r.errors())
        .find(|d| d.code == "tool.missing")
        .map(|d| d.message.clone());
    let verdict = match combine_verdicts(&reports) {
        Verdict::NotApplicable => Verdict::Pass,
        v => v,
    };
    Verification {
        verdict,
        error_count: reports.iter().map(|r| r.errors().count()).sum(),
        reports,
        infra,
    }
}

/// Tool-style listing of error diagnostics: rustc's `--> program.rs:L:C`
/// markers for Rust, `L:C: error:` lines for TypeScript.
pub fn diagnostic_text(reports: &[OracleReport], task: Task) -> String {
    let mut out = String::new();
    for d in reports.iter().flat_map(|r| r.errors()) {
        match task.dialect() {
            Dialect::Rust => {
                let _ = writeln!(out, "error[{}]: {}", d.code, d.message);
                let _ = writeln!(out, "  --> program.rs:{}:{}", d.line, d.column);
            }
            Dialect::TypeScript => {
                let _ = writeln!(out, "  {}:{}: error: {}  {}", d.line, d.column, d.message, d.code);
            }
        }
    }
    out
}

/// Feedback block for a retry, built from the outer reports on `program`.
pub fn refine_block(reports: &[OracleReport], program: &str, task: Task) -> String {
    let state = update_feedback(
        &FeedbackState::default(),
        &FeedbackInput {
            reports,
            text: program,
            dialect: task.dialect(),
            meta_step: 0,
        },
    );
    encode_feedback(&state)
}

fn emissions(reports: &[OracleReport], program: &str, task: Task) -> Vec<Emission> {
    reports
        .iter()
        .flat_map(|r| r.errors())
        .map(|d| Emission {
            code: d.code.clone(),
            anchor: anchor_for(d, program, task.dialect()).to_string(),
        })
        .collect()
}

enum Failure {
    Backend(BackendError),
    Tool(String),
}

struct Round {
    digest: RoundDigest,
    reports: Vec<OracleReport>,
}

/// One generation round followed by outer verification.
struct Rounds<'a> {
    case: CaseInput<'a>,
    env: StrategyEnv<'a>,
    config: StrategyConfig,
}

impl Rounds<'_> {
    fn seed(&self, attempt: usize) -> u64 {
        self.env.base_seed.wrapping_add(attempt as u64)
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        inner: InnerKind,
        context: &str,
        candidate: usize,
        round: usize,
        attempt: usize,
        allowance: usize,
        workdir: &Path,
        events: &mut Vec<StrategyEvent>,
    ) -> Result<Round, Failure> {
        let task = self.case.task;
        let seed = self.seed(attempt);
        let mut session = self.env.backend.session(attempt, seed);
        let (program, tokens, inner_digest) = match inner {
            InnerKind::Naive => {
                let cap = self.config.per_round_cap.min(allowance);
                events.push(StrategyEvent::RoundStart {
                    candidate,
                    round,
                    attempt,
                    seed,
                    allowance: cap,
                    chunk_cap: cap,
                    dtv: false,
                });
                let limits = CallLimits {
                    chunk_size: cap.max(1),
                    max_new: cap,
                    remaining: cap,
                };
                let reply = if cap == 0 {
                    Default::default()
                } else {
                    generate_reply(
                        session.as_mut(),
                        &[ChatMessage::user(context)],
                        &self.env.inner.sampling,
                        limits,
                    )
                    .map_err(Failure::Backend)?
                };
                (extract_program(&reply.text), reply.token_count, None)
            }
            InnerKind::Dtv(ablation) => {
                let mut cfg = apply_ablation(self.env.inner, ablation);
                cfg.budget = allowance;
                cfg.max_new = self.config.per_round_cap;
                events.push(StrategyEvent::RoundStart {
                    candidate,
                    round,
                    attempt,
                    seed,
                    allowance,
                    chunk_cap: cfg.chunk_size,
                    dtv: true,
                });
                let oracles = OracleEnv {
                    specs: self.env.inloop,
                    tools: self.env.tools,
                    workdir,
                };
                let inner_case = InnerCase {
                    task,
                    source: self.case.source,
                    context,
                };
                let result =
                    run_inner(&inner_case, session.as_mut(), &oracles, &cfg, seed).map_err(Failure::Backend)?;
                let inner_emissions = result
                    .trace
                    .iter()
                    .flat_map(|r| {
                        r.diagnostics.iter().map(|d| Emission {
                            code: d.code.clone(),
                            anchor: d.anchor.clone(),
                        })
                    })
                    .collect();
                let digest = InnerDigest {
                    outcome: result.outcome,
                    meta_steps: result.trace.len(),
                    rollbacks: result.rollbacks().count(),
                    tokens_discarded: result.tokens_discarded,
                    emissions: inner_emissions,
                };
                for record in &result.trace {
                    events.push(StrategyEvent::MetaStep {
                        attempt,
                        record: record.clone(),
                    });
                }
                (result.artifact, result.tokens_used, Some(digest))
            }
        };
        let outer = OracleEnv {
            specs: self.env.outer,
            tools: self.env.tools,
            workdir,
        };
        let v = verify_program(task, &program, &outer);
        if let Some(why) = v.infra {
            return Err(Failure::Tool(why));
        }
        let passed = v.passed();
        events.push(StrategyEvent::RoundEnd {
            attempt,
            passed,
            tokens,
            error_count: v.error_count,
            program: program.clone(),
        });
        Ok(Round {
            digest: RoundDigest {
                round,
                candidate,
                attempt,
                seed,
                passed,
                tokens,
                error_count: v.error_count,
                emissions: emissions(&v.reports, &program, task),
                diagnostic_text: diagnostic_text(&v.reports, task),
                program,
                inner: inner_digest,
            },
            reports: v.reports,
        })
    }

    fn outcome(&self, history: Vec<RoundDigest>, selected: Option<usize>, budget: usize) -> CaseOutcome {
        let tokens_total = history.iter().map(|r| r.tokens).sum();
        let chosen = selected.or_else(|| history.len().checked_sub(1));
        let (passed, program) = chosen
            .map(|i| (history[i].passed, history[i].program.clone()))
            .unwrap_or((false, String::new()));
        let (pass_round, tokens_at_first_pass) = match (passed, selected) {
            (false, _) => (None, None),
            (true, Some(i)) => (Some(history[i].round), Some(tokens_total)),
            (true, None) => {
                let i = history.iter().position(|r| r.passed).expect("a passing round");
                (Some(i + 1), Some(history[..=i].iter().map(|r| r.tokens).sum()))
            }
        };
        CaseOutcome {
            case_id: self.case.id.to_string(),
            strategy: self.config.strategy.to_string(),
            kind: OutcomeKind::Completed,
            infra_error: None,
            passed,
            pass_round,
            tokens_total,
            tokens_at_first_pass,
            rounds: history.len(),
            source_tokens: self.case.source_tokens,
            budget,
            program,
            history,
            functional: None,
        }
    }

    fn infra(&self, history: Vec<RoundDigest>, budget: usize, failure: Failure) -> CaseOutcome {
        let mut out = self.outcome(history, None, budget);
        out.kind = OutcomeKind::InfraFailure;
        out.passed = false;
        out.pass_round = None;
        out.tokens_at_first_pass = None;
        out.infra_error = Some(match failure {
            Failure::Backend(e) => format!("backend: {e}"),
            Failure::Tool(m) => format!("oracle: {m}"),
        });
        out
    }
}

fn start<'a>(case: CaseInput<'a>, env: StrategyEnv<'a>, config: StrategyConfig) -> (Rounds<'a>, usize) {
    let budget = config.budget(case.source_tokens);
    (Rounds { case, env, config }, budget)
}

/// A single attempt.
pub fn run_one_shot(case: CaseInput<'_>, env: StrategyEnv<'_>, config: StrategyConfig) -> RunOutput {
    let (rounds, budget) = start(case, env, config);
    let context = translation_context(case.task, case.source);
    let mut events = Vec::new();
    let outcome = match rounds.run(config.strategy.inner, &context, 0, 1, 0, budget, env.workdir, &mut events) {
        Ok(r) => rounds.outcome(vec![r.digest], None, budget),
        Err(f) => rounds.infra(Vec::new(), budget, f),
    };
    RunOutput { outcome, events }
}

/// Sequential attempts until the outer oracles pass or the budget runs out.
/// Each retry sees the previous program and its diagnostics only. A round
/// that generates nothing ends the run.
pub fn run_self_refine(case: CaseInput<'_>, env: StrategyEnv<'_>, config: StrategyConfig) -> RunOutput {
    let (rounds, budget) = start(case, env, config);
    let mut events = Vec::new();
    let mut history: Vec<RoundDigest> = Vec::new();
    let mut last_reports: Vec<OracleReport> = Vec::new();
    let mut used = 0;
    while used < budget {
        let context = match history.last() {
            None => translation_context(case.task, case.source),
            Some(prev) => refine_context(
                case.task,
                case.source,
                &prev.program,
                &refine_block(&last_reports, &prev.program, case.task),
            ),
        };
        let attempt = history.len();
        match rounds.run(
            config.strategy.inner,
            &context,
            0,
            attempt + 1,
            attempt,
            budget - used,
            env.workdir,
            &mut events,
        ) {
            Ok(r) => {
                used += r.digest.tokens;
                let done = r.digest.passed || r.digest.tokens == 0;
                history.push(r.digest);
                last_reports = r.reports;
                if done {
                    break;
                }
            }
            Err(f) => {
                return RunOutput {
                    outcome: rounds.infra(history, budget, f),
                    events,
                }
            }
        }
    }
    RunOutput {
        outcome: rounds.outcome(history, None, budget),
        events,
    }
}

/// Up to `n` independent naive attempts, stopping at the first pass.
pub fn run_best_of_n(case: CaseInput<'_>, env: StrategyEnv<'_>, config: StrategyConfig) -> RunOutput {
    let n = match config.strategy.outer {
        OuterKind::BestOfN(n) => n,
        _ => 1,
    };
    let (rounds, budget) = start(case, env, config);
    let context = translation_context(case.task, case.source);
    let mut events = Vec::new();
    let mut history = Vec::new();
    let mut used = 0;
    for attempt in 0..n {
        if used >= budget {
            break;
        }
        match rounds.run(
            InnerKind::Naive,
            &context,
            attempt,
            1,
            attempt,
            budget - used,
            env.workdir,
            &mut events,
        ) {
            Ok(r) => {
                used += r.digest.tokens;
                let passed = r.digest.passed;
                history.push(r.digest);
                if passed {
                    break;
                }
            }
            Err(f) => {
                return RunOutput {
                    outcome: rounds.infra(history, budget, f),
                    events,
                }
            }
        }
    }
    RunOutput {
        outcome: rounds.outcome(history, None, budget),
        events,
    }
}

struct Candidate {
    rounds: Vec<RoundDigest>,
    events: Vec<StrategyEvent>,
    failure: Option<Failure>,
}

/// `n` independent candidates, each refined with compile diagnostics for up
/// to `r` rounds inside an equal share of the budget. The candidate whose
/// last round has the fewest errors is returned; ties go to the lower index.
pub fn run_s_star(case: CaseInput<'_>, env: StrategyEnv<'_>, config: StrategyConfig) -> RunOutput {
    let (n, r) = match config.strategy.outer {
        OuterKind::SStar { n, r } => (n, r),
        _ => (super::SSTAR_DEFAULT_N, super::SSTAR_DEFAULT_R),
    };
    let (rounds, budget) = start(case, env, config);
    let share = budget / n.max(1);
    let candidates = map_range(env.parallelism, n, |c| {
        let workdir: PathBuf = env.workdir.join(format!("candidate-{c}"));
        let mut out = Candidate {
            rounds: Vec::new(),
            events: Vec::new(),
            failure: None,
        };
        if let Err(e) = std::fs::create_dir_all(&workdir) {
            out.failure = Some(Failure::Tool(format!("workdir: {e}")));
            return out;
        }
        let mut used = 0;
        let mut last_reports: Vec<OracleReport> = Vec::new();
        for round in 1..=r {
            if used >= share {
                break;
            }
            let context = match out.rounds.last() {
                None => translation_context(case.task, case.source),
                Some(prev) => refine_context(
                    case.task,
                    case.source,
                    &prev.program,
                    &refine_block(&last_reports, &prev.program, case.task),
                ),
            };
            let attempt = c * r + round - 1;
            match rounds.run(
                InnerKind::Naive,
                &context,
                c,
                round,
                attempt,
                share - used,
                &workdir,
                &mut out.events,
            ) {
                Ok(rd) => {
                    used += rd.digest.tokens;
                    let stop = rd.digest.error_count == 0 || rd.digest.tokens == 0;
                    out.rounds.push(rd.digest);
                    last_reports = rd.reports;
                    if stop {
                        break;
                    }
                }
                Err(f) => {
                    out.failure = Some(f);
                    break;
                }
            }
        }
        out
    });

    let mut events = Vec::new();
    let mut history = Vec::new();
    let mut failure = None;
    let mut best: Option<(usize, usize)> = None;
    for cand in candidates {
        events.extend(cand.events);
        if let Some(last) = cand.rounds.last() {
            let key = (last.error_count, history.len() + cand.rounds.len() - 1);
            if best.is_none_or(|(errors, _)| key.0 < errors) {
                best = Some(key);
            }
        }
        history.extend(cand.rounds);
        if failure.is_none() {
            failure = cand.failure;
        }
    }
    if let Some(f) = failure {
        return RunOutput {
            outcome: rounds.infra(history, budget, f),
            events,
        };
    }
    let selected = best.map(|(_, i)| i);
    if let Some(i) = selected {
        events.push(StrategyEvent::Selected {
            candidate: history[i].candidate,
            attempt: history[i].attempt,
        });
    }
    RunOutput {
        outcome: rounds.outcome(history, selected, budget),
        events,
    }
}

/// Dispatches on the configured outer loop.
pub fn run_strategy(case: CaseInput<'_>, env: StrategyEnv<'_>, config: StrategyConfig) -> RunOutput {
    match config.strategy.outer {
        OuterKind::OneShot => run_one_shot(case, env, config),
        OuterKind::SelfRefine => run_self_refine(case, env, config),
        OuterKind::BestOfN(_) => run_best_of_n(case, env, config),
        OuterKind::SStar { .. } => run_s_star(case, env, config),
    }
}
