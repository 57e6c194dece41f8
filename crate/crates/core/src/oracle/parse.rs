//! Tool output to [`Diagnostic`] records.

use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use super::{Diagnostic, Severity};

#[derive(Deserialize)]
struct RustcSpan {
    file_name: String,
    line_start: usize,
    line_end: usize,
    column_start: usize,
    column_end: usize,
    is_primary: bool,
}

#[derive(Deserialize)]
struct RustcCode {
    code: String,
}

#[derive(Deserialize)]
struct RustcMessage {
    #[serde(rename = "$message_type", default)]
    message_type: Option<String>,
    message: String,
    code: Option<RustcCode>,
    level: String,
    spans: Vec<RustcSpan>,
    rendered: Option<String>,
}

/// Parses rustc `--error-format=json` output (one JSON object per line).
///
/// Summary lines ("aborting due to ...") and notes are skipped. Errors
/// without an error code get the code `syntax`.
pub fn parse_rustc_json(stderr: &str) -> Result<Vec<Diagnostic>, String> {
    let mut out = Vec::new();
    for line in stderr.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !line.starts_with('{') {
            // rustc prints ICE banners and similar as plain text.
            continue;
        }
        let msg: RustcMessage =
            serde_json::from_str(line).map_err(|e| format!("bad rustc JSON line: {e}"))?;
        if msg.message_type.as_deref().is_some_and(|t| t != "diagnostic") {
            continue;
        }
        let severity = match msg.level.as_str() {
            "error" | "error: internal compiler error" => Severity::Error,
            "warning" => Severity::Warning,
            _ => continue,
        };
        if msg.spans.is_empty() && msg.code.is_none() {
            // "aborting due to N previous errors" and friends.
            continue;
        }
        let span = msg
            .spans
            .iter()
            .find(|s| s.is_primary && s.file_name.ends_with("program.rs"))
            .or_else(|| msg.spans.iter().find(|s| s.is_primary))
            .or_else(|| msg.spans.first());
        let code = msg.code.map(|c| c.code).unwrap_or_else(|| match severity {
            Severity::Error => "syntax".to_string(),
            Severity::Warning => "warning".to_string(),
        });
        let d = match span {
            Some(s) => Diagnostic {
                code,
                message: msg.message,
                line: s.line_start.max(1),
                column: s.column_start.max(1),
                end_line: Some(s.line_end),
                end_column: Some(s.column_end),
                severity,
                primary: s.is_primary,
                rendered: msg.rendered,
            },
            None => Diagnostic {
                code,
                message: msg.message,
                line: 1,
                column: 1,
                end_line: None,
                end_column: None,
                severity,
                primary: false,
                rendered: msg.rendered,
            },
        };
        out.push(d);
    }
    Ok(out)
}

/// Parses `tsc --pretty false` output: `file(line,col): error TSnnnn: message`,
/// with indented continuation lines folded into the message.
pub fn parse_tsc_output(stdout: &str) -> Result<Vec<Diagnostic>, String> {
    static LOCATED: OnceLock<Regex> = OnceLock::new();
    static GLOBAL: OnceLock<Regex> = OnceLock::new();
    let located = LOCATED.get_or_init(|| {
        Regex::new(r"^(?P<file>.+?)\((?P<line>\d+),(?P<col>\d+)\): (?P<sev>error|warning) (?P<code>TS\d+): (?P<msg>.*)$")
            .unwrap()
    });
    let global = GLOBAL
        .get_or_init(|| Regex::new(r"^(?P<sev>error|warning) (?P<code>TS\d+): (?P<msg>.*)$").unwrap());
    let mut out: Vec<Diagnostic> = Vec::new();
    for raw in stdout.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let severity = |s: &str| if s == "error" { Severity::Error } else { Severity::Warning };
        if let Some(c) = located.captures(raw) {
            out.push(Diagnostic {
                code: c["code"].to_string(),
                message: c["msg"].to_string(),
                line: c["line"].parse().unwrap_or(1),
                column: c["col"].parse().unwrap_or(1),
                end_line: None,
                end_column: None,
                severity: severity(&c["sev"]),
                primary: true,
                rendered: Some(raw.to_string()),
            });
        } else if let Some(c) = global.captures(raw) {
            out.push(Diagnostic {
                code: c["code"].to_string(),
                message: c["msg"].to_string(),
                line: 1,
                column: 1,
                end_line: None,
                end_column: None,
                severity: severity(&c["sev"]),
                primary: false,
                rendered: Some(raw.to_string()),
            });
        } else if raw.starts_with(char::is_whitespace) {
            if let Some(last) = out.last_mut() {
                last.message.push('\n');
                last.message.push_str(raw.trim());
            }
        } else if raw.starts_with("Found ") || raw.starts_with("Version ") {
            continue;
        } else {
            return Err(format!("unrecognized tsc output line: {raw}"));
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct EslintMessage {
    rule_id: Option<String>,
    severity: u8,
    message: String,
    #[serde(default)]
    line: Option<usize>,
    #[serde(default)]
    column: Option<usize>,
    #[serde(default)]
    end_line: Option<usize>,
    #[serde(default)]
    end_column: Option<usize>,
}

#[derive(Deserialize)]
struct EslintFile {
    messages: Vec<EslintMessage>,
}

/// Parses `eslint --format json`. Messages without a rule id are parser
/// failures and get the code `eslint.parse`.
pub fn parse_eslint_json(stdout: &str) -> Result<Vec<Diagnostic>, String> {
    let files: Vec<EslintFile> =
        serde_json::from_str(stdout.trim()).map_err(|e| format!("bad ESLint JSON: {e}"))?;
    let mut out = Vec::new();
    for f in files {
        for m in f.messages {
            out.push(Diagnostic {
                code: m.rule_id.unwrap_or_else(|| "eslint.parse".to_string()),
                message: m.message,
                line: m.line.unwrap_or(1).max(1),
                column: m.column.unwrap_or(1).max(1),
                end_line: m.end_line,
                end_column: m.end_column,
                severity: if m.severity >= 2 {
                    Severity::Error
                } else {
                    Severity::Warning
                },
                primary: m.line.is_some(),
                rendered: None,
            });
        }
    }
    Ok(out)
}
