use dtv_core::controller::{ActionKind, InnerOutcome, InnerResult};
use dtv_core::feedback::RetryMode;
use dtv_core::oracle::Verdict;
use dtv_core::scope::ScopeLevel;
use dtv_core::selftest::{run_scenario, Scenario};

use ScopeLevel::{Block, Func, Stmt};

fn run(s: Scenario) -> InnerResult {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(s, dir.path()).unwrap()
}

fn actions(r: &InnerResult) -> Vec<ActionKind> {
    r.trace.iter().map(|x| x.action.action).collect()
}

fn rollbacks(r: &InnerResult) -> Vec<(ScopeLevel, RetryMode)> {
    r.rollbacks()
        .map(|x| (x.action.scope.unwrap(), x.action.mode.unwrap()))
        .collect()
}

#[test]
fn all_pass_commits_every_boundary() {
    let r = run(Scenario::AllPass);
    assert_eq!(r.outcome, InnerOutcome::Success);
    assert_eq!(actions(&r), vec![ActionKind::Commit; 6]);
    let levels: Vec<_> = r.trace.iter().map(|x| x.boundary.unwrap()).collect();
    assert_eq!(levels.last(), Some(&ScopeLevel::Program));
    assert!(r.artifact.ends_with("    }\n}"));
    assert_eq!(r.tokens_discarded, 0);
}

#[test]
fn transient_failure_rolls_back_once() {
    let r = run(Scenario::Transient);
    assert_eq!(r.outcome, InnerOutcome::Success);
    assert_eq!(rollbacks(&r), vec![(Stmt, RetryMode::Inline)]);
    let rb = r.rollbacks().next().unwrap();
    assert_eq!(rb.k, 3);
    assert_eq!(rb.resume.as_deref(), Some("\n// FIX: E0425 unresolved identifier\n"));
    assert!(r.artifact.contains("let c = b;"));
    assert!(!r.artifact.contains("bad"));
}

#[test]
fn persistent_anchor_walks_the_full_ladder() {
    let r = run(Scenario::Persistent);
    assert_eq!(r.outcome, InnerOutcome::Bailout);
    let expected = vec![
        (Stmt, RetryMode::Inline),
        (Stmt, RetryMode::Inline),
        (Stmt, RetryMode::Inline),
        (Stmt, RetryMode::Patch),
        (Stmt, RetryMode::Patch),
        (Block, RetryMode::Inline),
        (Block, RetryMode::Inline),
        (Block, RetryMode::Patch),
        (Block, RetryMode::Patch),
        (Func, RetryMode::Inline),
        (Func, RetryMode::Inline),
        (Func, RetryMode::Inline),
    ];
    assert_eq!(rollbacks(&r), expected);
    let last = r.trace.last().unwrap();
    assert_eq!(last.action.action, ActionKind::Terminate);
    assert!(last.action.bailout);
    assert_eq!(r.outstanding.len(), 1);
    assert_eq!(r.outstanding[0].code, "E0425");
    // Block and function rollbacks restore earlier checkpoints than the
    // statement retries do.
    let targets: Vec<_> = r.rollbacks().map(|x| x.checkpoint_id.unwrap()).collect();
    assert_eq!(&targets[..5], &[2, 2, 2, 2, 2]);
    assert_eq!(targets[5], 1);
    assert_eq!(&targets[9..], &[0, 0, 0]);
    assert!(r.trace.iter().all(|x| x.patch_rejections.is_empty()));
}

#[test]
fn detect_and_abort_stops_at_first_failure() {
    let r = run(Scenario::DetectAndAbort);
    assert_eq!(r.outcome, InnerOutcome::Bailout);
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.trace[0].k, 1);
    assert_eq!(r.trace[0].verdict, Verdict::Fail);
    assert!(r.trace[0].action.bailout);
}

#[test]
fn no_escalation_stays_at_statement_scope() {
    let r = run(Scenario::NoEscalation);
    assert_eq!(r.outcome, InnerOutcome::Bailout);
    assert_eq!(rollbacks(&r), vec![(Stmt, RetryMode::Inline); 12]);
}

#[test]
fn traces_are_byte_identical_across_runs() {
    for s in Scenario::ALL {
        let a = serde_json::to_string(&run(s).trace).unwrap();
        let b = serde_json::to_string(&run(s).trace).unwrap();
        assert_eq!(a, b, "{}", s.name());
    }
}

#[test]
fn legal_prefix_invariant_holds() {
    for s in Scenario::ALL {
        let r = run(s);
        for x in r.trace.iter().filter(|x| x.action.action == ActionKind::Commit) {
            assert_ne!(x.verdict, Verdict::Fail, "{} step {}", s.name(), x.k);
        }
    }
}
