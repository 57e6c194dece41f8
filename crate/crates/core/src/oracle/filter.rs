//! Partial-prefix noise filtering and in-loop semantic weakening.

use std::sync::OnceLock;

use regex::RegexSet;

use super::OracleReport;
use crate::render::LineCol;
use crate::scope::Task;

pub const INCOMPLETENESS_TABLE_VERSION: u32 = 1;

/// Messages that only report an unfinished program.
pub const INCOMPLETENESS_PATTERNS: &[&str] = &[
    r"(?i)unexpected (end of file|end of input|end of text|eof)",
    r"<eof>",
    r"(?i)this file contains an unclosed delimiter",
    r"(?i)unclosed delimiter",
    r"^expected `[}\])]`",
    r"^'[}\])]' expected\.?$",
    r"(?i)unterminated (string|template|regular expression|block comment|character)",
    r"(?i)^parsing error: unexpected token$",
    r"(?i)^parsing error: '[}\])]' expected\.?$",
];

pub fn is_incompleteness_message(message: &str) -> bool {
    static SET: OnceLock<RegexSet> = OnceLock::new();
    SET.get_or_init(|| RegexSet::new(INCOMPLETENESS_PATTERNS).unwrap())
        .is_match(message.lines().next().unwrap_or(""))
}

/// Drops diagnostics caused by the synthetic suffix: those starting after the
/// last genuine character, those whose span runs past it, and incompleteness
/// reports. Tool-failure diagnostics are kept.
pub fn filter_prefix_noise(report: &OracleReport, prefix_extent: LineCol) -> OracleReport {
    let limit = (prefix_extent.line, prefix_extent.column);
    let end_limit = (prefix_extent.line, prefix_extent.column + 1);
    let mut out = report.clone();
    out.diagnostics.retain(|d| {
        if d.is_tool_failure() {
            return true;
        }
        if (d.line, d.column) > limit {
            return false;
        }
        if let (Some(el), Some(ec)) = (d.end_line, d.end_column) {
            if (el, ec) > end_limit {
                return false;
            }
        }
        !is_incompleteness_message(&d.message)
    });
    out.recompute_verdict();
    out
}

/// TS2322, TS2339 and TS2345 are not actionable mid-generation.
pub const WEAKENED_TS_CODES: [&str; 3] = ["TS2322", "TS2339", "TS2345"];

/// Removes the weakened type-correctness codes from an in-loop tsc report.
/// Identity for the C-to-Rust task.
pub fn weaken_inloop(report: &OracleReport, task: Task) -> OracleReport {
    let mut out = report.clone();
    if task == Task::JsToTs {
        out.diagnostics.retain(|d| !WEAKENED_TS_CODES.contains(&d.code.as_str()));
        out.recompute_verdict();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Diagnostic, Verdict};

    fn report(diags: Vec<Diagnostic>) -> OracleReport {
        OracleReport::from_diagnostics("t", diags, 0)
    }

    fn at(code: &str, line: usize, col: usize) -> Diagnostic {
        Diagnostic::error(code, "m", line, col)
    }

    #[test]
    fn drops_past_extent() {
        let ext = LineCol { line: 2, column: 10 };
        let r = filter_prefix_noise(&report(vec![at("E1", 3, 1), at("E2", 2, 11)]), ext);
        assert!(r.diagnostics.is_empty());
        assert_eq!(r.verdict, Verdict::Pass);
        let r = filter_prefix_noise(&report(vec![at("E3", 2, 10), at("E4", 1, 80)]), ext);
        assert_eq!(r.diagnostics.len(), 2);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn drops_spans_running_past_extent() {
        let ext = LineCol { line: 2, column: 10 };
        let mut d = at("E0308", 1, 5);
        d.end_line = Some(3);
        d.end_column = Some(2);
        let mut inside = at("E0425", 2, 3);
        inside.end_line = Some(2);
        inside.end_column = Some(11);
        let r = filter_prefix_noise(&report(vec![d, inside]), ext);
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].code, "E0425");
    }

    #[test]
    fn drops_incompleteness() {
        let d = Diagnostic::error("syntax", "this file contains an unclosed delimiter", 1, 1);
        let e = Diagnostic::error("TS1005", "'}' expected.", 1, 1);
        let r = filter_prefix_noise(&report(vec![d, e]), LineCol { line: 9, column: 9 });
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(!is_incompleteness_message("cannot find value `x` in this scope"));
    }

    #[test]
    fn keeps_tool_failures() {
        let r = filter_prefix_noise(&report(vec![at("tool.timeout", 1, 1)]), LineCol { line: 1, column: 0 });
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn weakening() {
        let r = report(vec![at("TS2339", 1, 1)]);
        assert_eq!(weaken_inloop(&r, Task::JsToTs).verdict, Verdict::Pass);
        assert_eq!(weaken_inloop(&r, Task::CToRust).verdict, Verdict::Fail);
        let r = report(vec![at("TS2554", 1, 1)]);
        assert_eq!(weaken_inloop(&r, Task::JsToTs), r);
    }
}
