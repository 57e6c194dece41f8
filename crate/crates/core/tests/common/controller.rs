use dtv_core::controller::{ActionKind, InnerOutcome, InnerResult};
use dtv_core::feedback::RetryMode::{self, Inline, Patch};
use dtv_core::oracle::Verdict;
use dtv_core::scope::ScopeLevel::{self, Block, Func, Stmt};
use dtv_core::selftest::{run_scenario, Scenario};

use super::ensure;

fn rollbacks(r: &InnerResult) -> Vec<(ScopeLevel, RetryMode)> {
    r.rollbacks()
        .filter_map(|x| Some((x.action.scope?, x.action.mode?)))
        .collect()
}

fn golden(s: Scenario) -> (InnerOutcome, Vec<(ScopeLevel, RetryMode)>) {
    use InnerOutcome::{Bailout, Success};
    match s {
        Scenario::AllPass => (Success, vec![]),
        Scenario::Transient => (Success, vec![(Stmt, Inline)]),
        Scenario::Persistent => (
            Bailout,
            vec![
                (Stmt, Inline),
                (Stmt, Inline),
                (Stmt, Inline),
                (Stmt, Patch),
                (Stmt, Patch),
                (Block, Inline),
                (Block, Inline),
                (Block, Patch),
                (Block, Patch),
                (Func, Inline),
                (Func, Inline),
                (Func, Inline),
            ],
        ),
        Scenario::DetectAndAbort => (Bailout, vec![]),
        Scenario::NoEscalation => (Bailout, vec![(Stmt, Inline); 12]),
    }
}

/// The five scripted scenarios against hand-written expectations, each run
/// twice.
pub fn scenarios() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for s in Scenario::ALL {
        let name = s.name();
        let r = run_scenario(s, dir.path()).map_err(|e| format!("{name}: {e}"))?;
        let (outcome, ladder) = golden(s);
        ensure(r.outcome == outcome, || format!("{name}: outcome {:?}", r.outcome))?;
        let got = rollbacks(&r);
        ensure(got == ladder, || format!("{name}: rollbacks {got:?}"))?;
        for x in &r.trace {
            ensure(!(x.action.action == ActionKind::Commit && x.verdict == Verdict::Fail), || {
                format!("{name}: failing commit at step {}", x.k)
            })?;
        }
        match s {
            Scenario::AllPass => ensure(
                r.trace.iter().all(|x| x.action.action == ActionKind::Commit),
                || format!("{name}: non-commit action"),
            )?,
            Scenario::DetectAndAbort => ensure(r.trace.len() == 1 && r.trace[0].k == 1, || {
                format!("{name}: {} meta steps", r.trace.len())
            })?,
            _ => {}
        }
        let again = run_scenario(s, dir.path()).map_err(|e| format!("{name}: {e}"))?;
        let a = serde_json::to_string(&r.trace).map_err(|e| e.to_string())?;
        let b = serde_json::to_string(&again.trace).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name}: traces differ between runs"))?;
    }
    Ok(())
}
