use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::oracle::Diagnostic;
use crate::scanner::GroupStack;
use crate::scope::Dialect;

pub const TOP_LEVEL: &str = "top-level";

/// Identity of a recurring failure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnosticAnchor {
    pub enclosing_function: String,
    pub primary_code: String,
    pub normalized_message: String,
}

impl fmt::Display for DiagnosticAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.enclosing_function, self.primary_code, self.normalized_message)
    }
}

/// Strips quoted path-like tokens, `file:line:col` markers and digit runs.
pub fn normalize_message(message: &str) -> String {
    static QUOTED_PATH: OnceLock<Regex> = OnceLock::new();
    static MARKER: OnceLock<Regex> = OnceLock::new();
    static DIGITS: OnceLock<Regex> = OnceLock::new();
    static SPACE: OnceLock<Regex> = OnceLock::new();
    let quoted_path = QUOTED_PATH.get_or_init(|| {
        Regex::new(r#"(["'`])[^"'`\s]*[/\\][^"'`\s]*(["'`])"#).unwrap()
    });
    let marker = MARKER.get_or_init(|| Regex::new(r"[\w./\\-]+:\d+(:\d+)?|\(\d+,\d+\)").unwrap());
    let digits = DIGITS.get_or_init(|| Regex::new(r"\d+").unwrap());
    let space = SPACE.get_or_init(|| Regex::new(r"\s+").unwrap());
    let first = message.lines().next().unwrap_or("");
    let s = quoted_path.replace_all(first, "${1}<path>${2}");
    let s = marker.replace_all(&s, "<loc>");
    let s = digits.replace_all(&s, "N");
    space.replace_all(s.trim(), " ").into_owned()
}

/// Name of the innermost function open at the diagnostic's start position in
/// `text`.
pub fn enclosing_function(text: &str, dialect: Dialect, line: usize, column: usize) -> String {
    let offset = byte_offset(text, line, column);
    let (stack, _) = GroupStack::scan(dialect, &text[..offset]);
    match stack.enclosing_function() {
        Some(f) => f.label.clone().unwrap_or_else(|| "<anonymous>".to_string()),
        None => TOP_LEVEL.to_string(),
    }
}

/// Byte offset of a 1-based line/column, clamped to the text.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut start = 0;
    for _ in 1..line.max(1) {
        match text[start..].find('\n') {
            Some(i) => start += i + 1,
            None => return text.len(),
        }
    }
    let line_text = &text[start..];
    let line_len = line_text.find('\n').unwrap_or(line_text.len());
    let within = line_text[..line_len]
        .char_indices()
        .nth(column.saturating_sub(1))
        .map(|(i, _)| i)
        .unwrap_or(line_len);
    start + within
}

pub fn anchor_for(d: &Diagnostic, text: &str, dialect: Dialect) -> DiagnosticAnchor {
    DiagnosticAnchor {
        enclosing_function: enclosing_function(text, dialect, d.line, d.column),
        primary_code: d.code.clone(),
        normalized_message: normalize_message(&d.message),
    }
}
