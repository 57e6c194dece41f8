use std::fs;
use std::path::Path;

use dtv_core::backend::ScriptedFixture;
use dtv_core::harness::{
    build_report, execute_run, ingest_corpus, write_report, BackendConfig, NamedRun, ReportSpec, RunConfig,
    RunOptions,
};
use dtv_core::scope::Task;
use dtv_core::selftest::{self, naive_fixture, outer_stub, stub_oracle, Scenario};
use dtv_core::strategy::Strategy;

use super::ensure;
use super::stats::exact_two_sided;

const GOOD: &str = "fn main() {\n    let a = 1;\n}";
const BAD: &str = "fn main() {\n    let a = bad;\n}";

/// Per case: naive reply, verified-decoding script. Two cases pass both
/// ways, four only under verified decoding, four under neither.
fn design() -> Vec<(String, &'static str, Scenario)> {
    let plan = [
        (GOOD, Scenario::AllPass),
        (GOOD, Scenario::Transient),
        (BAD, Scenario::AllPass),
        (BAD, Scenario::Transient),
        (BAD, Scenario::AllPass),
        (BAD, Scenario::Transient),
        (BAD, Scenario::Persistent),
        (BAD, Scenario::Persistent),
        (BAD, Scenario::Persistent),
        (BAD, Scenario::Persistent),
    ];
    plan.iter()
        .enumerate()
        .map(|(i, (naive, dtv))| (format!("case{i:02}"), *naive, *dtv))
        .collect()
}

fn write_fixtures(dir: &Path, items: impl Iterator<Item = (String, ScriptedFixture)>) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    for (id, f) in items {
        let text = serde_json::to_string(&f).map_err(|e| e.to_string())?;
        fs::write(dir.join(format!("{id}.json")), text).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn config(strategy: Strategy, fixtures: &Path, out: &Path) -> RunConfig {
    let mut c = RunConfig::new(strategy, Task::CToRust, BackendConfig::Scripted {
        fixtures: fixtures.to_path_buf(),
    });
    c.inloop_oracles = Some(vec![stub_oracle()]);
    c.outer_oracles = Some(vec![outer_stub()]);
    c.budget_multiplier = 1000.0;
    c.output = out.to_path_buf();
    c
}

/// Ten scripted cases through both one-shot strategies and the paired report.
pub fn mini_benchmark(work: &Path) -> Result<(), String> {
    let cases = design();
    let corpus = work.join("corpus");
    for (id, _, _) in &cases {
        fs::create_dir_all(corpus.join(id)).map_err(|e| e.to_string())?;
        fs::write(corpus.join(id).join("source.c"), selftest::SOURCE).map_err(|e| e.to_string())?;
    }
    write_fixtures(&work.join("fx-naive"), cases.iter().map(|(id, n, _)| (id.clone(), naive_fixture(&[n]))))?;
    write_fixtures(&work.join("fx-dtv"), cases.iter().map(|(id, _, s)| (id.clone(), selftest::fixture(*s))))?;
    let manifest = ingest_corpus(&corpus, Task::CToRust, None).map_err(|e| e.to_string())?;
    ensure(manifest.len() == 10, || format!("{} cases ingested", manifest.len()))?;

    let mut runs = Vec::new();
    for (name, strategy, fx, want) in [
        ("naive", Strategy::NAIVE_ONE_SHOT, "fx-naive", 2),
        ("dtv", Strategy::DTV_ONE_SHOT, "fx-dtv", 6),
    ] {
        let cfg = config(strategy, &work.join(fx), &work.join(name));
        let s = execute_run(&cfg, &manifest, &RunOptions::default()).map_err(|e| e.to_string())?;
        ensure(s.passed == want && s.infra_failures == 0, || {
            format!("{name}: {} passed, {} infra", s.passed, s.infra_failures)
        })?;
        runs.push(NamedRun {
            name: name.into(),
            outcomes: s.outcomes,
        });
    }

    let mut spec = ReportSpec::new(runs);
    spec.comparisons = vec![("naive".into(), "dtv".into())];
    spec.resamples = 200;
    let report = build_report(&spec).map_err(|e| e.to_string())?;
    let row = report.paired.first().ok_or("no paired row")?;
    ensure(row.only_b as i64 - row.only_a as i64 == 4, || {
        format!("only_a {} only_b {}", row.only_a, row.only_b)
    })?;
    ensure((row.both, row.neither, row.n) == (2, 4, 10), || format!("{row:?}"))?;
    let closed = exact_two_sided(row.only_a, row.only_b);
    ensure(closed == 0.125 && row.p == closed, || format!("p {} vs closed form {closed}", row.p))?;

    let written = write_report(&report, &work.join("report")).map_err(|e| e.to_string())?;
    let paired = written
        .iter()
        .find(|p| p.ends_with("paired.csv"))
        .ok_or("paired.csv not written")?;
    let text = fs::read_to_string(paired).map_err(|e| e.to_string())?;
    ensure(text.lines().count() == 2 && text.contains("naive,dtv,10,2,0,4,4"), || text.clone())?;
    Ok(())
}
