//! Boundary-terminated prefix to oracle-consumable artifact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scanner::GroupStack;
use crate::scope::{Dialect, ScopeLevel, Task};

/// 1-based line and column (columns count characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineCol {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedArtifact {
    pub text: String,
    pub scope: ScopeLevel,
    pub synthetic_suffix: String,
    /// Position of the last genuine character of the prefix.
    pub prefix_extent: LineCol,
    /// Byte length of the genuine prefix within `text`.
    pub prefix_len: usize,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("prefix does not end at a structural boundary")]
    NotAtBoundary,
}

/// Renders `prefix` into a complete compilation unit.
///
/// `stack` must be the scanner state after consuming exactly `prefix`, with
/// its last boundary ending at the final byte. Open frames are closed
/// innermost-first; functions with a declared return value get a diverging
/// tail so the closing brace does not introduce a type error of its own.
/// TypeScript artifacts below program scope also get `export {};` unless the
/// prefix already contains an import or export, so the file always parses as
/// a module.
pub fn render(
    _source: &str,
    prefix: &str,
    stack: &GroupStack,
    task: Task,
) -> Result<RenderedArtifact, RenderError> {
    let boundary = stack.last_boundary().ok_or(RenderError::NotAtBoundary)?;
    if !stack.at_boundary() || stack.offset() != prefix.len() || boundary.end_offset != prefix.len() {
        return Err(RenderError::NotAtBoundary);
    }
    let scope = boundary.level;
    let mut suffix = String::new();
    for frame in stack.frames.iter().rev() {
        suffix.push('\n');
        if frame.kind == ScopeLevel::Func && frame.returns_value {
            match task.dialect() {
                Dialect::Rust => suffix.push_str("unimplemented!()\n"),
                Dialect::TypeScript => suffix.push_str("throw 0;\n"),
            }
        }
        suffix.push('}');
    }
    if !stack.frames.is_empty() {
        suffix.push('\n');
    }
    if task.dialect() == Dialect::TypeScript && scope < ScopeLevel::Program && !has_module_syntax(prefix) {
        if suffix.is_empty() && !prefix.ends_with('\n') {
            suffix.push('\n');
        }
        suffix.push_str("export {};\n");
    }
    let mut text = String::with_capacity(prefix.len() + suffix.len());
    text.push_str(prefix);
    text.push_str(&suffix);
    Ok(RenderedArtifact {
        text,
        scope,
        synthetic_suffix: suffix,
        prefix_extent: last_char_position(prefix),
        prefix_len: prefix.len(),
        task,
    })
}

impl RenderedArtifact {
    /// A finished program, verified as is at program scope.
    pub fn complete(text: &str, task: Task) -> Self {
        RenderedArtifact {
            text: text.to_string(),
            scope: ScopeLevel::Program,
            synthetic_suffix: String::new(),
            prefix_extent: last_char_position(text),
            prefix_len: text.len(),
            task,
        }
    }
}

fn has_module_syntax(prefix: &str) -> bool {
    prefix.lines().any(|l| {
        let t = l.trim_start();
        t.starts_with("import ") || t.starts_with("import{") || t.starts_with("export ") || t.starts_with("export{")
    })
}

/// Line/column of the last character of `text`; (1, 0) for empty text.
pub fn last_char_position(text: &str) -> LineCol {
    let Some(last) = text.chars().next_back() else {
        return LineCol { line: 1, column: 0 };
    };
    position_at(text, text.len() - last.len_utf8())
}

/// Line/column of the character starting at byte `offset` (or one past the
/// end of `text`).
pub fn position_at(text: &str, offset: usize) -> LineCol {
    let body = &text[..offset];
    let line_start = body.rfind('\n').map(|i| i + 1).unwrap_or(0);
    LineCol {
        line: body.matches('\n').count() + 1,
        column: body[line_start..].chars().count() + 1,
    }
}
