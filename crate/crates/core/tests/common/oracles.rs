use std::path::{Path, PathBuf};
use std::time::Duration;

use dtv_core::oracle::{differential_case, invoke_oracle, OracleKind, OracleReport, OracleSpec, Toolchain, Verdict};
use dtv_core::render::{render, RenderedArtifact};
use dtv_core::scanner::GroupStack;
use dtv_core::scope::{Dialect, ScopeLevel, Task};

use super::{ensure, need, Check, CheckResult};

fn rendered(dialect: Dialect, prefix: &str, task: Task) -> Result<RenderedArtifact, String> {
    let (stack, _) = GroupStack::scan(dialect, prefix);
    render("", prefix, &stack, task).map_err(|e| format!("render: {e}"))
}

fn codes(r: &OracleReport) -> Vec<String> {
    r.errors().map(|d| d.code.clone()).collect()
}

/// A Rust prefix whose only error sits in the synthetic suffix, and one whose
/// error is genuine.
pub fn rustc_prefix_noise(work: &Path) -> CheckResult {
    let tools = Toolchain::from_env();
    if let Some(skip) = need(&tools.rustc) {
        return Ok(skip);
    }
    let raw = OracleSpec::new("rustc", ScopeLevel::Stmt, OracleKind::Rustc);
    let filtered = raw.clone().with_filter(true, false);

    let a = rendered(Dialect::Rust, "fn f() -> i32 {\n    let a = 1;", Task::CToRust)?;
    let before = invoke_oracle(&raw, &a, &work.join("r1"), &tools);
    ensure(before.verdict == Verdict::Fail, || format!("unfiltered verdict {:?}", before.verdict))?;
    let after = invoke_oracle(&filtered, &a, &work.join("r2"), &tools);
    ensure(after.verdict == Verdict::Pass, || format!("filtered errors {:?}", codes(&after)))?;

    let b = rendered(
        Dialect::Rust,
        "fn f() -> Option<i32> {\n    let a = Some(1);\n    match a {\n        Some(x) => {\n            let y = x;",
        Task::CToRust,
    )?;
    let r = invoke_oracle(&filtered, &b, &work.join("r3"), &tools);
    ensure(codes(&r) == ["E0004"], || format!("genuine error lost: {:?}", codes(&r)))?;
    Ok(Check::Pass)
}

/// TS2339 is tolerated in the loop and still fails the outer check.
pub fn tsc_weakening(work: &Path) -> CheckResult {
    let tools = Toolchain::from_env();
    if let Some(skip) = need(&tools.tsc) {
        return Ok(skip);
    }
    let prefix = "const o = { a: 1 };\nconst n: number = o.b;\n";
    let partial = rendered(Dialect::TypeScript, prefix.trim_end(), Task::JsToTs)?;
    let inloop = OracleSpec::new("tsc", ScopeLevel::Stmt, OracleKind::Tsc);
    let raw = invoke_oracle(&inloop, &partial, &work.join("t1"), &tools);
    ensure(codes(&raw) == ["TS2339"], || format!("unfiltered tsc errors {:?}", codes(&raw)))?;
    let weak = invoke_oracle(&inloop.clone().with_filter(true, true), &partial, &work.join("t2"), &tools);
    ensure(weak.verdict == Verdict::Pass, || format!("weakened errors {:?}", codes(&weak)))?;

    let outer = OracleSpec::new("tsc", ScopeLevel::Program, OracleKind::Tsc);
    let full = RenderedArtifact::complete(prefix, Task::JsToTs);
    let r = invoke_oracle(&outer, &full, &work.join("t3"), &tools);
    ensure(r.verdict == Verdict::Fail && codes(&r) == ["TS2339"], || {
        format!("outer tsc verdict {:?} {:?}", r.verdict, codes(&r))
    })?;
    Ok(Check::Pass)
}

pub const ECHO_C: &str = r#"#include <stdio.h>
int main(void) {
    int c;
    while ((c = getchar()) != EOF) putchar(c);
    return 0;
}
"#;

pub const ECHO_RS: &str = r#"use std::io::{Read, Write};
fn main() {
    let mut s = Vec::new();
    std::io::stdin().read_to_end(&mut s).unwrap();
    std::io::stdout().write_all(&s).unwrap();
}
"#;

/// Echoes everything except input starting with `#`, which prints nothing.
pub const ECHO_RS_DIVERGENT: &str = r#"use std::io::{Read, Write};
fn main() {
    let mut s = Vec::new();
    std::io::stdin().read_to_end(&mut s).unwrap();
    if s.first() != Some(&b'#') {
        std::io::stdout().write_all(&s).unwrap();
    }
}
"#;

pub const ECHO_RS_BROKEN: &str = "fn main() {\n    let x: u32 = \"no\";\n}\n";

pub fn echo_inputs(dir: &Path) -> Vec<PathBuf> {
    let texts = ["hello\n", "a b c\n1 2 3\n", "#comment\n", "trailing   \n", ""];
    std::fs::create_dir_all(dir).unwrap();
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = dir.join(format!("in{i}.txt"));
            std::fs::write(&p, t).unwrap();
            p
        })
        .collect()
}

/// Identical, one-class-divergent and non-compiling translations of `cat`.
pub fn differential_echo(work: &Path) -> CheckResult {
    let tools = Toolchain::from_env();
    for t in [&tools.cc, &tools.rustc] {
        if let Some(skip) = need(t) {
            return Ok(skip);
        }
    }
    let inputs = echo_inputs(&work.join("inputs"));
    let n = inputs.len();
    let timeout = Duration::from_secs(10);
    let same = differential_case(ECHO_C, ECHO_RS, &inputs, &work.join("d1"), &tools, timeout)?;
    ensure(same.compiled && same.tests_passed == n, || format!("echo: {}/{}", same.tests_passed, n))?;
    let div = differential_case(ECHO_C, ECHO_RS_DIVERGENT, &inputs, &work.join("d2"), &tools, timeout)?;
    ensure(div.compiled && div.tests_passed == n - 1, || format!("divergent: {}/{}", div.tests_passed, n))?;
    let bad = differential_case(ECHO_C, ECHO_RS_BROKEN, &inputs, &work.join("d3"), &tools, timeout)?;
    ensure(!bad.compiled && bad.tests_passed == 0 && bad.tests_total == n, || {
        format!("broken: compiled={} {}/{}", bad.compiled, bad.tests_passed, bad.tests_total)
    })?;
    Ok(Check::Pass)
}
