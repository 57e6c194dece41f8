//! Where a repair lands relative to the flagged lines, and per-code views of
//! the diagnostics that rescued cases carried.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::seqmatch::changed_lines;
use crate::scope::{Dialect, Task};
use crate::strategy::Emission;

pub const REWRITE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeLabel {
    Local,
    Mixed,
    Nonlocal,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    ExtractFail,
    NoOp,
    Rewrite,
    NoErrorLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FixShape {
    pub label: ShapeLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_reason: Option<UnknownReason>,
}

impl FixShape {
    fn known(label: ShapeLabel) -> Self {
        FixShape { label, sub_reason: None }
    }

    fn unknown(reason: UnknownReason) -> Self {
        FixShape {
            label: ShapeLabel::Unknown,
            sub_reason: Some(reason),
        }
    }

    pub fn name(&self) -> String {
        match self.sub_reason {
            None => format!("{:?}", self.label).to_uppercase(),
            Some(r) => format!("UNKNOWN({})", serde_json::to_value(r).unwrap().as_str().unwrap()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LineSets {
    pub n_r1: usize,
    pub error_lines: BTreeSet<usize>,
    pub changed_lines: BTreeSet<usize>,
}

impl LineSets {
    /// Line sets for a first attempt, its diagnostic block and the repair.
    pub fn from_rounds(r1: &str, diagnostics: &str, r2: &str, task: Task) -> Self {
        let a: Vec<&str> = r1.lines().collect();
        let b: Vec<&str> = r2.lines().collect();
        LineSets {
            n_r1: a.len(),
            error_lines: extract_error_lines(diagnostics, task),
            changed_lines: changed_lines(&a, &b),
        }
    }
}

/// First matching rule wins.
pub fn classify_fix_shape(sets: &LineSets) -> FixShape {
    let (e, c) = (&sets.error_lines, &sets.changed_lines);
    if sets.n_r1 == 0 {
        return FixShape::unknown(UnknownReason::ExtractFail);
    }
    if c.is_empty() {
        return FixShape::unknown(UnknownReason::NoOp);
    }
    if c.len() as f64 / sets.n_r1 as f64 > REWRITE_THRESHOLD {
        return FixShape::unknown(UnknownReason::Rewrite);
    }
    if e.is_empty() {
        return FixShape::unknown(UnknownReason::NoErrorLines);
    }
    if c.is_subset(e) {
        FixShape::known(ShapeLabel::Local)
    } else if c.is_disjoint(e) {
        FixShape::known(ShapeLabel::Nonlocal)
    } else {
        FixShape::known(ShapeLabel::Mixed)
    }
}

/// Lines named by primary error markers: `--> program.rs:L:C` for rustc,
/// `L:C: error:` for the TypeScript tools.
pub fn extract_error_lines(block: &str, task: Task) -> BTreeSet<usize> {
    static RUST: OnceLock<Regex> = OnceLock::new();
    static TS: OnceLock<Regex> = OnceLock::new();
    let re = match task.dialect() {
        Dialect::Rust => RUST.get_or_init(|| Regex::new(r"-->\s*(?:\S*/)?program\.rs:(\d+):\d+").unwrap()),
        Dialect::TypeScript => TS.get_or_init(|| Regex::new(r"(?m)^\s*(\d+):\d+:?\s+error\b").unwrap()),
    };
    re.captures_iter(block)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Distinct verified-loop emissions over distinct naive first-round
/// emissions, both restricted to codes the two share.
pub fn shared_code_ratio(dtv: &[Emission], naive_r1: &[Emission]) -> Option<f64> {
    let codes = |xs: &[Emission]| xs.iter().map(|e| e.code.clone()).collect::<BTreeSet<_>>();
    let shared: BTreeSet<String> = codes(dtv).intersection(&codes(naive_r1)).cloned().collect();
    if shared.is_empty() {
        return None;
    }
    let distinct = |xs: &[Emission]| xs.iter().filter(|e| shared.contains(&e.code)).collect::<BTreeSet<_>>().len();
    Some(distinct(dtv) as f64 / distinct(naive_r1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRescue {
    pub code: String,
    pub cases: usize,
    pub rescued: usize,
    pub rate: f64,
}

/// Rescue rate per first-round error code. A case counts once for every
/// distinct code it carried; codes seen on fewer than `min_cases` cases are
/// left out. Sorted by case count, then code.
pub fn per_code_rescue(cases: &[(Vec<String>, bool)], min_cases: usize) -> Vec<CodeRescue> {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (codes, rescued) in cases {
        let distinct: BTreeSet<&str> = codes.iter().map(String::as_str).collect();
        for code in distinct {
            let t = tally.entry(code).or_default();
            t.0 += 1;
            t.1 += usize::from(*rescued);
        }
    }
    let mut out: Vec<CodeRescue> = tally
        .into_iter()
        .filter(|(_, (n, _))| *n >= min_cases.max(1))
        .map(|(code, (n, r))| CodeRescue {
            code: code.to_string(),
            cases: n,
            rescued: r,
            rate: r as f64 / n as f64,
        })
        .collect();
    out.sort_by(|a, b| b.cases.cmp(&a.cases).then_with(|| a.code.cmp(&b.code)));
    out
}
