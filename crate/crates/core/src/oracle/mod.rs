//! External verifiers, their diagnostics, and verdict filtering.

mod differential;
mod filter;
mod parse;
pub mod process;

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::render::{position_at, RenderedArtifact};
use crate::scope::{ScopeLevel, Task};

pub use differential::{
    compile_c, compile_rust, differential_case, normalize_output, run_differential, FunctionalReport,
    TestOutcome, TestResult,
};
pub use filter::{
    filter_prefix_noise, is_incompleteness_message, weaken_inloop, INCOMPLETENESS_PATTERNS,
    INCOMPLETENESS_TABLE_VERSION, WEAKENED_TS_CODES,
};
pub use parse::{parse_eslint_json, parse_rustc_json, parse_tsc_output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
    pub line: usize,
    pub column: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_line: Option<usize>,
    /// Exclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_column: Option<usize>,
    pub severity: Severity,
    pub primary: bool,
    /// Tool-native rendering, when the tool provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered: Option<String>,
}

impl Diagnostic {
    pub fn error(code: impl Into<String>, message: impl Into<String>, line: usize, column: usize) -> Self {
        Diagnostic {
            code: code.into(),
            message: message.into(),
            line: line.max(1),
            column: column.max(1),
            end_line: None,
            end_column: None,
            severity: Severity::Error,
            primary: true,
            rendered: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Synthetic diagnostics standing in for a tool failure.
    pub fn is_tool_failure(&self) -> bool {
        self.code.starts_with("tool.")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle_id: String,
    pub verdict: Verdict,
    pub diagnostics: Vec<Diagnostic>,
    pub wall_ms: u64,
}

impl OracleReport {
    pub fn not_applicable(oracle_id: &str) -> Self {
        OracleReport {
            oracle_id: oracle_id.to_string(),
            verdict: Verdict::NotApplicable,
            diagnostics: Vec::new(),
            wall_ms: 0,
        }
    }

    /// Builds a report whose verdict follows from the diagnostics.
    pub fn from_diagnostics(oracle_id: &str, diagnostics: Vec<Diagnostic>, wall_ms: u64) -> Self {
        let mut r = OracleReport {
            oracle_id: oracle_id.to_string(),
            verdict: Verdict::Pass,
            diagnostics,
            wall_ms,
        };
        r.recompute_verdict();
        r
    }

    pub fn recompute_verdict(&mut self) {
        if self.verdict == Verdict::NotApplicable {
            return;
        }
        self.verdict = if self.diagnostics.iter().any(Diagnostic::is_error) {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }
}

/// Regex-driven stand-in verifier used by tests and the scripted harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRule {
    pub pattern: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleKind {
    Rustc,
    Tsc,
    Eslint,
    Pattern { rules: Vec<PatternRule> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPolicy {
    #[serde(default)]
    pub prefix_noise: bool,
    #[serde(default)]
    pub weaken_inloop: bool,
}

fn default_timeout_s() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub oracle_id: String,
    pub min_scope: ScopeLevel,
    pub kind: OracleKind,
    /// Replaces the default command line. Placeholders: `{tool}`, `{file}`, `{workdir}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default)]
    pub filter: FilterPolicy,
}

impl OracleSpec {
    pub fn new(oracle_id: &str, min_scope: ScopeLevel, kind: OracleKind) -> Self {
        OracleSpec {
            oracle_id: oracle_id.to_string(),
            min_scope,
            kind,
            command: None,
            timeout_s: default_timeout_s(),
            filter: FilterPolicy::default(),
        }
    }

    pub fn with_filter(mut self, prefix_noise: bool, weaken_inloop: bool) -> Self {
        self.filter = FilterPolicy {
            prefix_noise,
            weaken_inloop,
        };
        self
    }

    pub fn pattern(oracle_id: &str, min_scope: ScopeLevel, rules: &[(&str, &str, &str)]) -> Self {
        let rules = rules
            .iter()
            .map(|(p, c, m)| PatternRule {
                pattern: p.to_string(),
                code: c.to_string(),
                message: m.to_string(),
            })
            .collect();
        OracleSpec::new(oracle_id, min_scope, OracleKind::Pattern { rules })
    }
}

/// Paths to the external tools. Every field can be overridden from the
/// environment (`DTV_RUSTC`, `DTV_TSC`, `DTV_ESLINT`, `DTV_CC`, `DTV_NODE_PATH`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    pub rustc: String,
    pub tsc: String,
    pub eslint: String,
    pub cc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_path: Option<String>,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            rustc: "rustc".into(),
            tsc: "tsc".into(),
            eslint: "eslint".into(),
            cc: "cc".into(),
            node_path: None,
        }
    }
}

impl Toolchain {
    pub fn from_env() -> Self {
        Toolchain::default().with_env_overrides()
    }

    pub fn with_env_overrides(mut self) -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("DTV_RUSTC") {
            self.rustc = v;
        }
        if let Some(v) = var("DTV_TSC") {
            self.tsc = v;
        }
        if let Some(v) = var("DTV_ESLINT") {
            self.eslint = v;
        }
        if let Some(v) = var("DTV_CC") {
            self.cc = v;
        }
        if let Some(v) = var("DTV_NODE_PATH") {
            self.node_path = Some(v);
        }
        self
    }

    fn tool_for(&self, kind: &OracleKind) -> &str {
        match kind {
            OracleKind::Rustc => &self.rustc,
            OracleKind::Tsc => &self.tsc,
            OracleKind::Eslint => &self.eslint,
            OracleKind::Pattern { .. } => "",
        }
    }
}

/// Which oracle set a strategy consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    InLoop,
    OuterLoop,
    PostHoc,
}

/// Default oracle suite for a task at a given stage.
pub fn default_suite(task: Task, stage: Stage) -> Vec<OracleSpec> {
    let min = match stage {
        Stage::InLoop => ScopeLevel::Stmt,
        Stage::OuterLoop | Stage::PostHoc => ScopeLevel::Program,
    };
    let inloop = stage == Stage::InLoop;
    match task {
        Task::CToRust => vec![OracleSpec::new("rustc", min, OracleKind::Rustc).with_filter(inloop, false)],
        Task::JsToTs => vec![
            OracleSpec::new("tsc", min, OracleKind::Tsc).with_filter(inloop, inloop),
            OracleSpec::new("eslint", min, OracleKind::Eslint).with_filter(inloop, false),
        ],
    }
}

pub fn applicable(spec: &OracleSpec, artifact: &RenderedArtifact) -> bool {
    artifact.scope >= spec.min_scope
}

/// Pass iff every applicable report passes; NotApplicable iff none applies.
pub fn combine_verdicts(reports: &[OracleReport]) -> Verdict {
    let mut any = false;
    for r in reports {
        match r.verdict {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Pass => any = true,
            Verdict::NotApplicable => {}
        }
    }
    if any {
        Verdict::Pass
    } else {
        Verdict::NotApplicable
    }
}

const TSCONFIG: &str = r#"{
  "compilerOptions": {
    "strict": false,
    "target": "es2020",
    "module": "esnext",
    "moduleResolution": "bundler",
    "lib": ["es2020", "dom"],
    "noEmit": true,
    "skipLibCheck": true
  },
  "files": ["program.ts"]
}
"#;

const ESLINT_CONFIG: &str = r#"const tseslint = require("typescript-eslint");
module.exports = [
  {
    files: ["**/*.ts"],
    languageOptions: { parser: tseslint.parser },
    plugins: { "@typescript-eslint": tseslint.plugin },
    rules: {
      "@typescript-eslint/typedef": ["error", {
        parameter: true,
        arrowParameter: true,
        memberVariableDeclaration: true,
        propertyDeclaration: true
      }],
      "@typescript-eslint/explicit-function-return-type": "error"
    }
  }
];
"#;

fn default_command(kind: &OracleKind) -> Vec<String> {
    let v: &[&str] = match kind {
        OracleKind::Rustc => &[
            "{tool}",
            "--edition",
            "2021",
            "--error-format=json",
            "--emit=metadata",
            "--crate-type",
            "bin",
            "--crate-name",
            "program",
            "-o",
            "{workdir}/program.rmeta",
            "{file}",
        ],
        OracleKind::Tsc => &["{tool}", "-p", "tsconfig.json", "--pretty", "false"],
        OracleKind::Eslint => &[
            "{tool}",
            "--format",
            "json",
            "--no-ignore",
            "-c",
            "eslint.config.cjs",
            "{file}",
        ],
        OracleKind::Pattern { .. } => &[],
    };
    v.iter().map(|s| s.to_string()).collect()
}

fn tool_failure(spec: &OracleSpec, kind: &str, message: String, wall_ms: u64) -> OracleReport {
    OracleReport {
        oracle_id: spec.oracle_id.clone(),
        verdict: Verdict::Fail,
        diagnostics: vec![Diagnostic::error(format!("tool.{kind}"), message, 1, 1)],
        wall_ms,
    }
}

/// Runs one oracle on an artifact and applies its filter policy.
///
/// Tool failures never escape: they come back as a failing report carrying a
/// single `tool.missing`, `tool.timeout`, `tool.parse` or `tool.io`
/// diagnostic.
pub fn invoke_oracle(
    spec: &OracleSpec,
    artifact: &RenderedArtifact,
    workdir: &Path,
    tools: &Toolchain,
) -> OracleReport {
    if !applicable(spec, artifact) {
        return OracleReport::not_applicable(&spec.oracle_id);
    }
    let raw = match &spec.kind {
        OracleKind::Pattern { rules } => run_pattern(spec, rules, artifact),
        _ => run_external(spec, artifact, workdir, tools),
    };
    apply_filters(spec, artifact, raw)
}

/// Filter pipeline: prefix noise below program scope, then in-loop weakening.
pub fn apply_filters(spec: &OracleSpec, artifact: &RenderedArtifact, report: OracleReport) -> OracleReport {
    let mut report = report;
    if spec.filter.prefix_noise && artifact.scope < ScopeLevel::Program {
        report = filter_prefix_noise(&report, artifact.prefix_extent);
    }
    if spec.filter.weaken_inloop {
        report = weaken_inloop(&report, artifact.task);
    }
    report
}

fn run_pattern(spec: &OracleSpec, rules: &[PatternRule], artifact: &RenderedArtifact) -> OracleReport {
    let genuine = &artifact.text[..artifact.prefix_len];
    let mut diags = Vec::new();
    for rule in rules {
        let re = match Regex::new(&rule.pattern) {
            Ok(re) => re,
            Err(e) => return tool_failure(spec, "parse", format!("bad pattern: {e}"), 0),
        };
        for m in re.find_iter(genuine) {
            let start = position_at(genuine, m.start());
            let end = position_at(genuine, m.end());
            let mut d = Diagnostic::error(rule.code.clone(), rule.message.clone(), start.line, start.column);
            d.end_line = Some(end.line);
            d.end_column = Some(end.column);
            diags.push(d);
        }
    }
    OracleReport::from_diagnostics(&spec.oracle_id, diags, 0)
}

fn run_external(
    spec: &OracleSpec,
    artifact: &RenderedArtifact,
    workdir: &Path,
    tools: &Toolchain,
) -> OracleReport {
    let start = Instant::now();
    let ms = |s: Instant| s.elapsed().as_millis() as u64;
    let file = format!("program.{}", artifact.task.target_extension());
    let prepared = fs::create_dir_all(workdir)
        .and_then(|_| fs::write(workdir.join(&file), &artifact.text))
        .and_then(|_| match spec.kind {
            OracleKind::Tsc => fs::write(workdir.join("tsconfig.json"), TSCONFIG),
            OracleKind::Eslint => fs::write(workdir.join("eslint.config.cjs"), ESLINT_CONFIG),
            _ => Ok(()),
        });
    if let Err(e) = prepared {
        return tool_failure(spec, "io", format!("cannot write artifact: {e}"), ms(start));
    }
    let tool = tools.tool_for(&spec.kind);
    let template = spec.command.clone().unwrap_or_else(|| default_command(&spec.kind));
    let workdir_s = workdir.to_string_lossy();
    let argv: Vec<String> = template
        .iter()
        .map(|a| a.replace("{tool}", tool).replace("{file}", &file).replace("{workdir}", &workdir_s))
        .collect();
    let Some((program, args)) = argv.split_first() else {
        return tool_failure(spec, "io", "empty command".into(), 0);
    };
    let mut env = Vec::new();
    if let (OracleKind::Eslint, Some(np)) = (&spec.kind, &tools.node_path) {
        env.push(("NODE_PATH".to_string(), np.clone()));
    }
    let job = process::Job {
        program,
        args,
        cwd: Some(workdir),
        env: &env,
        stdin: None,
        timeout: Duration::from_secs_f64(spec.timeout_s.max(0.001)),
    };
    let out = match process::run(&job) {
        Ok(out) => out,
        Err(process::ProcessError::Missing(t)) => {
            return tool_failure(spec, "missing", format!("tool not found: {t}"), ms(start))
        }
        Err(process::ProcessError::Timeout(d)) => {
            return tool_failure(spec, "timeout", format!("timed out after {d:?}"), ms(start))
        }
        Err(e) => return tool_failure(spec, "io", e.to_string(), ms(start)),
    };
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed = match spec.kind {
        OracleKind::Rustc => parse_rustc_json(&stderr),
        OracleKind::Tsc => parse_tsc_output(&stdout),
        OracleKind::Eslint => parse_eslint_json(&stdout),
        OracleKind::Pattern { .. } => unreachable!(),
    };
    let wall = ms(start);
    match parsed {
        Ok(diags) => {
            let report = OracleReport::from_diagnostics(&spec.oracle_id, diags, wall);
            if report.verdict == Verdict::Pass && !out.status.success() {
                let msg = format!(
                    "tool exited with {} and no parsable error: {}",
                    out.status,
                    first_line(&stderr).or(first_line(&stdout)).unwrap_or("")
                );
                return tool_failure(spec, "parse", msg, wall);
            }
            report
        }
        Err(e) => tool_failure(spec, "parse", e, wall),
    }
}

fn first_line(s: &str) -> Option<&str> {
    s.lines().map(str::trim).find(|l| !l.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{render, LineCol};
    use crate::scanner::GroupStack;

    fn artifact(text: &str, scope: ScopeLevel) -> RenderedArtifact {
        RenderedArtifact {
            text: text.to_string(),
            scope,
            synthetic_suffix: String::new(),
            prefix_extent: crate::render::last_char_position(text),
            prefix_len: text.len(),
            task: Task::CToRust,
        }
    }

    #[test]
    fn applicability_threshold() {
        let s = OracleSpec::new("r", ScopeLevel::Stmt, OracleKind::Rustc);
        assert!(applicable(&s, &artifact("x;", ScopeLevel::Block)));
        let s = OracleSpec::new("r", ScopeLevel::Program, OracleKind::Rustc);
        assert!(!applicable(&s, &artifact("x;", ScopeLevel::Func)));
        assert!(applicable(&s, &artifact("x;", ScopeLevel::Program)));
    }

    #[test]
    fn combine() {
        let r = |v| OracleReport {
            oracle_id: "o".into(),
            verdict: v,
            diagnostics: vec![],
            wall_ms: 0,
        };
        assert_eq!(combine_verdicts(&[r(Verdict::Pass), r(Verdict::NotApplicable)]), Verdict::Pass);
        assert_eq!(combine_verdicts(&[r(Verdict::Pass), r(Verdict::Fail)]), Verdict::Fail);
        assert_eq!(combine_verdicts(&[]), Verdict::NotApplicable);
        assert_eq!(combine_verdicts(&[r(Verdict::NotApplicable)]), Verdict::NotApplicable);
    }

    #[test]
    fn pattern_oracle_reports_line() {
        let spec = OracleSpec::pattern("stub", ScopeLevel::Stmt, &[("BAD", "E9001", "bad token")]);
        let p = "fn main() {\n    let y = BAD;";
        let (s, _) = GroupStack::scan(crate::scope::Dialect::Rust, p);
        let a = render("", p, &s, Task::CToRust).unwrap();
        let r = invoke_oracle(&spec, &a, Path::new("/nonexistent"), &Toolchain::default());
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!((r.diagnostics[0].line, r.diagnostics[0].column), (2, 13));
        assert_eq!(a.prefix_extent, LineCol { line: 2, column: 16 });
    }

    #[test]
    fn missing_tool_is_a_failing_report() {
        let spec = OracleSpec::new("rustc", ScopeLevel::Stmt, OracleKind::Rustc);
        let tools = Toolchain {
            rustc: "dtv-no-such-rustc".into(),
            ..Toolchain::default()
        };
        let dir = std::env::temp_dir().join(format!("dtv-missing-{}", std::process::id()));
        let r = invoke_oracle(&spec, &artifact("fn main() {}\n", ScopeLevel::Program), &dir, &tools);
        let _ = fs::remove_dir_all(&dir);
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.diagnostics[0].code, "tool.missing");
    }

    #[test]
    fn spec_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct W {
            oracle: Vec<OracleSpec>,
        }
        let w = W {
            oracle: default_suite(Task::JsToTs, Stage::InLoop),
        };
        let text = toml::to_string(&w).unwrap();
        let back: W = toml::from_str(&text).unwrap();
        assert_eq!(back.oracle, w.oracle);
    }
}
