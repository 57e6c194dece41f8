//! Scripted scenarios exercising the controller without a model or toolchain.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::backend::{Backend, BackendError, ScriptedAttempt, ScriptedBackend, ScriptedFixture};
use crate::controller::{
    apply_ablation, run_inner, Ablation, InnerCase, InnerConfig, InnerOutcome, InnerResult, OracleEnv,
};
use crate::feedback::RetryMode;
use crate::oracle::{OracleSpec, Toolchain};
use crate::prompt::translation_context;
use crate::scope::{ScopeLevel, Task};

/// Splits text into scripted tokens that the scripted backend joins back to
/// the same text: a single separating space is dropped, any other leading
/// whitespace stays on the token.
pub fn tokens(text: &str) -> Vec<String> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN.get_or_init(|| Regex::new(r"\s*\S+").unwrap());
    re.find_iter(text)
        .map(|m| {
            let t = m.as_str();
            match t.strip_prefix(' ') {
                Some(rest) if !rest.starts_with(char::is_whitespace) => rest.to_string(),
                _ => t.to_string(),
            }
        })
        .collect()
}

pub const SOURCE: &str = "int main(void) {\n    int a = 1;\n    if (a > 0) {\n        int b = 2;\n        int c = b;\n    }\n    return 0;\n}\n";

/// In-loop stub: any `bad` identifier is an unresolved name.
pub fn stub_oracle() -> OracleSpec {
    OracleSpec::pattern(
        "stub",
        ScopeLevel::Stmt,
        &[(r"\bbad\b", "E0425", "unresolved identifier")],
    )
}

/// The same check applied to finished programs.
pub fn outer_stub() -> OracleSpec {
    OracleSpec::pattern(
        "stub",
        ScopeLevel::Program,
        &[(r"\bbad\b", "E0425", "unresolved identifier")],
    )
}

/// One attempt per program, each a single complete reply.
pub fn naive_fixture(programs: &[&str]) -> ScriptedFixture {
    ScriptedFixture {
        attempts: programs
            .iter()
            .map(|p| ScriptedAttempt {
                calls: vec![tokens(p)],
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    AllPass,
    Transient,
    Persistent,
    DetectAndAbort,
    NoEscalation,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::AllPass,
        Scenario::Transient,
        Scenario::Persistent,
        Scenario::DetectAndAbort,
        Scenario::NoEscalation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AllPass => "all-pass",
            Scenario::Transient => "transient",
            Scenario::Persistent => "persistent",
            Scenario::DetectAndAbort => "detect-and-abort",
            Scenario::NoEscalation => "no-escalation",
        }
    }

    pub fn ablation(self) -> Ablation {
        match self {
            Scenario::DetectAndAbort => Ablation {
                detect_and_abort: true,
                ..Ablation::default()
            },
            Scenario::NoEscalation => Ablation {
                no_escalation: true,
                ..Ablation::default()
            },
            _ => Ablation::default(),
        }
    }
}

const HEAD: &str = "fn main() {\n    let a = 1;";
const IF_OPEN: &str = "\n    if a > 0 {\n        let b = 2;";
const BAD: &str = "\n        let c = bad;";
const GOOD: &str = "\n        let c = b;";
const CLOSE_IF: &str = "\n    }";
const CLOSE_FN: &str = "\n}";

fn patch(line: usize, from: &str, to: &str) -> Vec<String> {
    tokens(&format!("@@ -{line},1 +{line},1 @@\n-        let c = {from};\n+        let c = {to};\n"))
}

/// Call script for a scenario. Comment lines spliced by inline retries shift
/// the patch line numbers, so those are written out per rung.
pub fn fixture(s: Scenario) -> ScriptedFixture {
    let mut calls: Vec<Vec<String>> = Vec::new();
    let mut push = |t: &str| calls.push(tokens(t));
    match s {
        Scenario::AllPass => {
            for t in [HEAD, IF_OPEN, GOOD, CLOSE_IF, CLOSE_FN] {
                push(t);
            }
        }
        Scenario::Transient => {
            for t in [HEAD, IF_OPEN, BAD, GOOD, CLOSE_IF, CLOSE_FN] {
                push(t);
            }
        }
        Scenario::DetectAndAbort => {
            push("fn main() {\n    let a = bad;");
        }
        Scenario::NoEscalation => {
            push(HEAD);
            push(IF_OPEN);
            for _ in 0..13 {
                push(BAD);
            }
        }
        Scenario::Persistent => {
            push(HEAD);
            push(IF_OPEN);
            // Statement rungs: three inline retries, then two patches.
            for _ in 0..4 {
                push(BAD);
            }
            calls.push(patch(7, "bad", "bad + 0"));
            calls.push(patch(7, "bad + 0", "bad + 1"));
            let mut push = |t: &str| calls.push(tokens(t));
            // Block rungs restart after `let a`; the regenerated block commits.
            push(IF_OPEN);
            push(BAD);
            push(IF_OPEN);
            push(BAD);
            calls.push(patch(7, "bad", "bad + 0"));
            calls.push(patch(7, "bad + 0", "bad + 1"));
            // Function rungs restart from the empty prefix.
            for _ in 0..3 {
                let mut push = |t: &str| calls.push(tokens(t));
                push(HEAD);
                push(IF_OPEN);
                push(BAD);
            }
        }
    }
    ScriptedFixture::single(calls)
}

pub fn config(s: Scenario) -> InnerConfig {
    let base = InnerConfig::new(Task::CToRust, 10_000);
    apply_ablation(&base, s.ablation())
}

pub fn run_scenario(s: Scenario, workdir: &Path) -> Result<InnerResult, BackendError> {
    let backend = ScriptedBackend::new(fixture(s));
    let specs = [stub_oracle()];
    let tools = Toolchain::default();
    let env = OracleEnv {
        specs: &specs,
        tools: &tools,
        workdir,
    };
    let context = translation_context(Task::CToRust, SOURCE);
    let case = InnerCase {
        task: Task::CToRust,
        source: SOURCE,
        context: &context,
    };
    let seed = 7;
    let mut session = backend.session(0, seed);
    run_inner(&case, session.as_mut(), &env, &config(s), seed)
}

/// Outcome and rollback rungs a scenario must produce.
pub fn expected(s: Scenario) -> (InnerOutcome, Vec<(ScopeLevel, RetryMode)>) {
    use RetryMode::{Inline as I, Patch as P};
    use ScopeLevel::{Block, Func, Stmt};
    match s {
        Scenario::AllPass => (InnerOutcome::Success, vec![]),
        Scenario::Transient => (InnerOutcome::Success, vec![(Stmt, I)]),
        Scenario::Persistent => (
            InnerOutcome::Bailout,
            vec![
                (Stmt, I),
                (Stmt, I),
                (Stmt, I),
                (Stmt, P),
                (Stmt, P),
                (Block, I),
                (Block, I),
                (Block, P),
                (Block, P),
                (Func, I),
                (Func, I),
                (Func, I),
            ],
        ),
        Scenario::DetectAndAbort => (InnerOutcome::Bailout, vec![]),
        Scenario::NoEscalation => (InnerOutcome::Bailout, vec![(Stmt, I); 12]),
    }
}

/// Runs a scenario twice and compares it with its expected shape.
pub fn check(s: Scenario, workdir: &Path) -> Result<(), String> {
    let a = run_scenario(s, workdir).map_err(|e| e.to_string())?;
    let b = run_scenario(s, workdir).map_err(|e| e.to_string())?;
    let (outcome, rungs) = expected(s);
    if a.outcome != outcome {
        return Err(format!("outcome {:?}, expected {outcome:?}", a.outcome));
    }
    let got: Vec<_> = a
        .rollbacks()
        .map(|r| (r.action.scope.unwrap_or(ScopeLevel::Program), r.action.mode.unwrap_or(RetryMode::Inline)))
        .collect();
    if got != rungs {
        return Err(format!("rollbacks {got:?}, expected {rungs:?}"));
    }
    if s == Scenario::DetectAndAbort && a.trace.len() != 1 {
        return Err(format!("{} meta steps, expected 1", a.trace.len()));
    }
    let json = |r: &InnerResult| serde_json::to_string(&r.trace).unwrap_or_default();
    if json(&a) != json(&b) {
        return Err("traces differ between identical runs".into());
    }
    Ok(())
}
