//! Patch-repair turns: prompt construction and constrained unified-diff application.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::state::FailureEntry;

pub const PATCH_FORMAT_VERSION: u32 = 1;

/// Inclusive, 1-based line range of the prefix a patch may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineWindow {
    pub start: usize,
    pub end: usize,
}

impl LineWindow {
    pub fn contains(&self, line: usize) -> bool {
        (self.start..=self.end).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchRejection {
    #[error("hunk at line {0} falls outside the rollback window")]
    OutOfWindow(usize),
    #[error("context mismatch at line {0}")]
    ContextMismatch(usize),
    #[error("unparseable patch: {0}")]
    Unparseable(String),
}

impl PatchRejection {
    pub fn kind(&self) -> &'static str {
        match self {
            PatchRejection::OutOfWindow(_) => "out_of_window",
            PatchRejection::ContextMismatch(_) => "context_mismatch",
            PatchRejection::Unparseable(_) => "unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Hunk {
    old_start: usize,
    old_count: usize,
    lines: Vec<HunkLine>,
}

impl Hunk {
    fn old_lines(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Context(s) | HunkLine::Remove(s) => Some(s.as_str()),
            HunkLine::Add(_) => None,
        })
    }

    fn new_lines(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Context(s) | HunkLine::Add(s) => Some(s.as_str()),
            HunkLine::Remove(_) => None,
        })
    }
}

/// Content of the first ```diff (or bare ```) fence, or the whole reply.
fn diff_body(reply: &str) -> &str {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let fence = FENCE.get_or_init(|| Regex::new(r"(?s)```(?:diff|patch)?[ \t]*\r?\n(.*?)```").unwrap());
    fence
        .captures(reply)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str())
        .unwrap_or(reply)
}

fn parse_hunks(reply: &str) -> Result<Vec<Hunk>, PatchRejection> {
    static HEADER: OnceLock<Regex> = OnceLock::new();
    let header = HEADER
        .get_or_init(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap());
    let bad = |m: &str| PatchRejection::Unparseable(m.to_string());
    let mut hunks = Vec::new();
    let mut lines = diff_body(reply).lines().peekable();
    while let Some(line) = lines.next() {
        let Some(c) = header.captures(line) else {
            continue;
        };
        let num = |i: usize| c.get(i).map_or(Ok(1), |m| m.as_str().parse::<usize>());
        let old_start = num(1).map_err(|_| bad("bad hunk header"))?;
        let old_count = num(2).map_err(|_| bad("bad hunk header"))?;
        let new_count = num(4).map_err(|_| bad("bad hunk header"))?;
        let (mut old_seen, mut new_seen) = (0, 0);
        let mut body = Vec::new();
        while old_seen < old_count || new_seen < new_count {
            let Some(l) = lines.next() else {
                return Err(bad("hunk body shorter than its header"));
            };
            let hl = if let Some(rest) = l.strip_prefix('+') {
                new_seen += 1;
                HunkLine::Add(rest.to_string())
            } else if let Some(rest) = l.strip_prefix('-') {
                old_seen += 1;
                HunkLine::Remove(rest.to_string())
            } else if l.starts_with('\\') {
                continue;
            } else {
                old_seen += 1;
                new_seen += 1;
                HunkLine::Context(l.strip_prefix(' ').unwrap_or(l).to_string())
            };
            body.push(hl);
        }
        if old_seen != old_count || new_seen != new_count {
            return Err(bad("hunk body does not match its header counts"));
        }
        while lines.peek().is_some_and(|l| l.starts_with('\\')) {
            lines.next();
        }
        hunks.push(Hunk {
            old_start,
            old_count,
            lines: body,
        });
    }
    if hunks.is_empty() {
        return Err(bad("no hunks"));
    }
    Ok(hunks)
}

/// First line a hunk replaces; a pure insertion (`-a,0`) goes after line `a`.
fn first_old_line(h: &Hunk) -> usize {
    if h.old_count == 0 {
        h.old_start + 1
    } else {
        h.old_start
    }
}

/// Applies a unified diff to `prefix`, accepting it only when every hunk lies
/// inside `window` and its context and removed lines match exactly.
pub fn validate_and_apply_patch(prefix: &str, patch: &str, window: LineWindow) -> Result<String, PatchRejection> {
    let hunks = parse_hunks(patch)?;
    let src: Vec<&str> = prefix.lines().collect();
    let mut next_free = 1;
    for h in &hunks {
        let first = first_old_line(h);
        if first < next_free {
            return Err(PatchRejection::Unparseable("overlapping hunks".into()));
        }
        next_free = first + h.old_count;
        let inside = if h.old_count == 0 {
            h.old_start + 1 >= window.start && h.old_start <= window.end
        } else {
            window.contains(first) && window.contains(first + h.old_count - 1)
        };
        if !inside {
            return Err(PatchRejection::OutOfWindow(first));
        }
    }
    let mut out: Vec<&str> = Vec::with_capacity(src.len());
    let mut cursor = 1;
    for h in &hunks {
        let first = first_old_line(h);
        if first - 1 > src.len() {
            return Err(PatchRejection::OutOfWindow(first));
        }
        out.extend(&src[cursor - 1..first - 1]);
        for (i, want) in h.old_lines().enumerate() {
            let line = first + i;
            if src.get(line - 1).copied() != Some(want) {
                return Err(PatchRejection::ContextMismatch(line));
            }
        }
        out.extend(h.new_lines());
        cursor = first + h.old_count;
    }
    if cursor <= src.len() {
        out.extend(&src[cursor - 1..]);
    }
    let mut text = out.join("\n");
    if prefix.ends_with('\n') && !text.is_empty() {
        text.push('\n');
    }
    Ok(text)
}

/// User turn asking for a minimal patch against the numbered window.
pub fn build_patch_turn(entries: &[FailureEntry], window: &str, window_origin: usize) -> String {
    let mut out = String::from("The verifier rejected the code below.\n\nDiagnostics:\n");
    for e in entries {
        let _ = writeln!(out, "- [{}] {} (line {})", e.anchor.primary_code, e.message, e.line);
    }
    out.push_str("\nEditable region:\n");
    for (i, line) in window.lines().enumerate() {
        let _ = writeln!(out, "{:>5} | {}", window_origin + i, line);
    }
    out.push_str(
        "\nReply with a minimal unified diff (`@@ -a,b +c,d @@` hunks, exact context lines) \
         that fixes the diagnostics. Only lines of the editable region may change.\n",
    );
    out
}
