//! Incremental structural scanner over a growing target-program prefix.
//!
//! The scanner tracks lexical mode (code, comments, string-like literals),
//! open delimiters inside the current statement, and a stack of group frames
//! for blocks and functions. It reports [`Boundary`] events where a
//! statement, block, function or whole program ends. Boundaries are only
//! ever reported from code mode with no open delimiters.
//!
//! Input may arrive in arbitrary chunks: every piece of lookahead state
//! (a pending `/`, a half-read raw-string terminator, a `$` before `{` in a
//! template literal) lives in the [`GroupStack`] itself, so feeding a text in
//! one piece or one character at a time yields the same result.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scope::{Dialect, ScopeLevel};

/// Statement buffers are trimmed to this many bytes (front-dropped).
const STMT_WINDOW: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexMode {
    Code,
    LineComment,
    BlockComment,
    StringLit,
    CharLit,
    RawOrTemplateLit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupFrame {
    /// `Block` or `Func`.
    pub kind: ScopeLevel,
    /// Byte offset of the opening `{`.
    pub open_offset: usize,
    /// Whitespace-delimited tokens seen before the opening brace.
    pub open_token_count: usize,
    /// Function name for `Func` frames, when the header names one.
    pub label: Option<String>,
    /// The function header declares a non-unit return type.
    pub returns_value: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub level: ScopeLevel,
    /// Exclusive byte offset of the boundary-terminating token.
    pub end_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("unbalanced closing brace at byte {offset}")]
    UnbalancedClose { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delim {
    Paren,
    Bracket,
    Brace,
    /// `${ ... }` inside a template literal.
    TemplateExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharState {
    /// Just after the opening quote.
    Start,
    /// One plain character read; a closing quote must follow.
    One,
    /// Escape seen; read until the closing quote.
    Escaped,
}

/// Structural parsing state over a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStack {
    pub dialect: Dialect,
    pub frames: Vec<GroupFrame>,
    pub lex_mode: LexMode,
    pub delimiter_depth: usize,
    delims: Vec<Delim>,
    offset: usize,
    tokens: usize,
    in_token: bool,
    stmt: String,
    stmt_assign: bool,
    assign_undo: Option<bool>,
    prev: Option<char>,
    prev_sig: Option<char>,
    pending_slash: Option<PendingSlash>,
    quote: char,
    escape: bool,
    regex_class: bool,
    comment_depth: usize,
    raw_hashes: usize,
    raw_closing: Option<usize>,
    char_state: CharState,
    last_boundary: Option<Boundary>,
    poisoned: Option<ScanError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingSlash {
    regex_ok: bool,
    prev_sig: Option<char>,
}

/// Result of [`advance_scanner`].
#[derive(Debug, Clone)]
pub struct Advance {
    pub stack: GroupStack,
    pub boundaries: Vec<Boundary>,
    pub errors: Vec<ScanError>,
}

/// Feeds `chunk` into a copy of `stack`, returning the new stack and every
/// boundary crossed, in order.
pub fn advance_scanner(stack: &GroupStack, chunk: &str) -> Advance {
    let mut next = stack.clone();
    let was_poisoned = next.poisoned.is_some();
    let boundaries = next.feed(chunk);
    let errors = match (&next.poisoned, was_poisoned) {
        (Some(e), false) => vec![e.clone()],
        _ => Vec::new(),
    };
    Advance {
        stack: next,
        boundaries,
        errors,
    }
}

/// Scope of the innermost open group: `Program` at top level.
pub fn current_scope(stack: &GroupStack) -> ScopeLevel {
    match stack.frames.last() {
        None => ScopeLevel::Program,
        Some(f) => f.kind,
    }
}

impl GroupStack {
    pub fn new(dialect: Dialect) -> Self {
        GroupStack {
            dialect,
            frames: Vec::new(),
            lex_mode: LexMode::Code,
            delimiter_depth: 0,
            delims: Vec::new(),
            offset: 0,
            tokens: 0,
            in_token: false,
            stmt: String::new(),
            stmt_assign: false,
            assign_undo: None,
            prev: None,
            prev_sig: None,
            pending_slash: None,
            quote: '"',
            escape: false,
            regex_class: false,
            comment_depth: 0,
            raw_hashes: 0,
            raw_closing: None,
            char_state: CharState::Start,
            last_boundary: None,
            poisoned: None,
        }
    }

    /// Scans `text` from a fresh state.
    pub fn scan(dialect: Dialect, text: &str) -> (GroupStack, Vec<Boundary>) {
        let mut s = GroupStack::new(dialect);
        let b = s.feed(text);
        (s, b)
    }

    /// Bytes consumed so far.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn token_count(&self) -> usize {
        self.tokens
    }

    pub fn last_boundary(&self) -> Option<Boundary> {
        self.last_boundary
    }

    /// True when the most recent boundary ends exactly at the consumed offset.
    pub fn at_boundary(&self) -> bool {
        self.poisoned.is_none()
            && self
                .last_boundary
                .is_some_and(|b| b.end_offset == self.offset)
    }

    pub fn poison(&self) -> Option<&ScanError> {
        self.poisoned.as_ref()
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned.is_some()
    }

    /// Innermost open `Func` frame.
    pub fn enclosing_function(&self) -> Option<&GroupFrame> {
        self.frames.iter().rev().find(|f| f.kind == ScopeLevel::Func)
    }

    /// Feeds all of `text`, returning every boundary crossed.
    pub fn feed(&mut self, text: &str) -> Vec<Boundary> {
        let mut out = Vec::new();
        for c in text.chars() {
            if let Some(b) = self.step(c) {
                out.push(b);
            }
        }
        out
    }

    /// Feeds `text` up to and including the first boundary (or the character
    /// that poisons the scanner). Returns the number of bytes consumed.
    pub fn feed_until_boundary(&mut self, text: &str) -> (usize, Option<Boundary>) {
        let was_poisoned = self.poisoned.is_some();
        for (i, c) in text.char_indices() {
            if let Some(b) = self.step(c) {
                return (i + c.len_utf8(), Some(b));
            }
            if !was_poisoned && self.poisoned.is_some() {
                return (i + c.len_utf8(), None);
            }
        }
        (text.len(), None)
    }

    /// Handles end-of-sequence: a `Program` boundary when the scanner is at
    /// top level with nothing left open.
    pub fn finish(&mut self) -> Option<Boundary> {
        let settled = matches!(self.lex_mode, LexMode::Code | LexMode::LineComment)
            && self.frames.is_empty()
            && self.delims.is_empty()
            && self.poisoned.is_none()
            && self.offset > 0;
        if !settled {
            return None;
        }
        let b = Boundary {
            level: ScopeLevel::Program,
            end_offset: self.offset,
        };
        self.last_boundary = Some(b);
        Some(b)
    }

    fn step(&mut self, c: char) -> Option<Boundary> {
        let start = self.offset;
        self.offset += c.len_utf8();
        if c.is_whitespace() {
            self.in_token = false;
        } else if !self.in_token {
            self.in_token = true;
            self.tokens += 1;
        }
        let b = self.dispatch(c, start);
        let b = match b {
            Some(b) if self.poisoned.is_none() => {
                self.last_boundary = Some(b);
                Some(b)
            }
            _ => None,
        };
        self.sync_depth();
        b
    }

    fn sync_depth(&mut self) {
        self.delimiter_depth = self.delims.len();
    }

    fn dispatch(&mut self, c: char, at: usize) -> Option<Boundary> {
        match self.lex_mode {
            LexMode::Code => self.step_code(c, at),
            LexMode::LineComment => {
                if c == '\n' {
                    self.lex_mode = LexMode::Code;
                    self.prev = None;
                    return self.step_code(c, at);
                }
                None
            }
            LexMode::BlockComment => {
                self.step_block_comment(c);
                None
            }
            LexMode::StringLit => self.step_string(c),
            LexMode::CharLit => self.step_char_lit(c, at),
            LexMode::RawOrTemplateLit => {
                match self.dialect {
                    Dialect::Rust => self.step_raw_string(c),
                    Dialect::TypeScript => self.step_template(c),
                }
                None
            }
        }
    }

    fn push_stmt(&mut self, c: char) {
        self.stmt.push(c);
        if self.stmt.len() > STMT_WINDOW {
            let mut cut = self.stmt.len() - STMT_WINDOW;
            while !self.stmt.is_char_boundary(cut) {
                cut += 1;
            }
            self.stmt.drain(..cut);
        }
    }

    fn reset_stmt(&mut self) {
        self.stmt.clear();
        self.stmt_assign = false;
        self.assign_undo = None;
    }

    fn step_code(&mut self, c: char, at: usize) -> Option<Boundary> {
        if let Some(p) = self.pending_slash.take() {
            match c {
                '/' => {
                    self.stmt.pop();
                    self.prev_sig = p.prev_sig;
                    self.lex_mode = LexMode::LineComment;
                    self.prev = None;
                    return None;
                }
                '*' => {
                    self.stmt.pop();
                    self.prev_sig = p.prev_sig;
                    self.lex_mode = LexMode::BlockComment;
                    self.comment_depth = 1;
                    self.prev = None;
                    return None;
                }
                _ if p.regex_ok => {
                    self.lex_mode = LexMode::StringLit;
                    self.quote = '/';
                    self.escape = false;
                    self.regex_class = false;
                    self.prev = None;
                    return self.step_string(c);
                }
                _ => {}
            }
        }

        // `==`, `=>`: the first `=` was provisionally taken as assignment.
        if let Some(undo) = self.assign_undo.take() {
            if self.prev == Some('=') && (c == '=' || c == '>') {
                self.stmt_assign = undo;
            }
        }

        let prev = self.prev;
        self.prev = Some(c);
        let mut boundary = None;
        match c {
            '/' => {
                let regex_ok = self.dialect == Dialect::TypeScript && self.regex_allowed();
                self.pending_slash = Some(PendingSlash {
                    regex_ok,
                    prev_sig: self.prev_sig,
                });
                self.push_stmt(c);
            }
            '"' => {
                self.push_stmt(c);
                if self.dialect == Dialect::Rust {
                    if let Some(hashes) = raw_string_hashes(&self.stmt[..self.stmt.len() - 1]) {
                        self.lex_mode = LexMode::RawOrTemplateLit;
                        self.raw_hashes = hashes;
                        self.raw_closing = None;
                        return None;
                    }
                }
                self.enter_string('"');
            }
            '\'' => {
                self.push_stmt(c);
                match self.dialect {
                    Dialect::Rust => {
                        self.lex_mode = LexMode::CharLit;
                        self.char_state = CharState::Start;
                        self.escape = false;
                    }
                    Dialect::TypeScript => self.enter_string('\''),
                }
            }
            '`' if self.dialect == Dialect::TypeScript => {
                self.push_stmt(c);
                self.lex_mode = LexMode::RawOrTemplateLit;
                self.escape = false;
                self.prev = None;
            }
            '(' => {
                self.delims.push(Delim::Paren);
                self.push_stmt(c);
            }
            '[' => {
                self.delims.push(Delim::Bracket);
                self.push_stmt(c);
            }
            ')' | ']' => {
                self.delims.pop();
                self.push_stmt(c);
            }
            '{' => {
                if !self.delims.is_empty() {
                    self.delims.push(Delim::Brace);
                    self.push_stmt(c);
                } else if let Some(header) = self.function_header() {
                    self.frames.push(GroupFrame {
                        kind: ScopeLevel::Func,
                        open_offset: at,
                        open_token_count: self.tokens - 1,
                        label: header.label,
                        returns_value: header.returns_value,
                    });
                    self.reset_stmt();
                } else if self.stmt_assign {
                    self.delims.push(Delim::Brace);
                    self.push_stmt(c);
                } else {
                    self.frames.push(GroupFrame {
                        kind: ScopeLevel::Block,
                        open_offset: at,
                        open_token_count: self.tokens - 1,
                        label: None,
                        returns_value: false,
                    });
                    self.reset_stmt();
                }
            }
            '}' => {
                if let Some(d) = self.delims.pop() {
                    self.push_stmt(c);
                    if d == Delim::TemplateExpr {
                        self.lex_mode = LexMode::RawOrTemplateLit;
                        self.escape = false;
                        self.prev = None;
                    }
                } else if let Some(frame) = self.frames.pop() {
                    self.reset_stmt();
                    boundary = Some(Boundary {
                        level: frame.kind,
                        end_offset: at + 1,
                    });
                } else if self.poisoned.is_none() {
                    self.poisoned = Some(ScanError::UnbalancedClose { offset: at });
                }
            }
            ';' => {
                if self.delims.is_empty() {
                    self.reset_stmt();
                    boundary = Some(Boundary {
                        level: ScopeLevel::Stmt,
                        end_offset: at + 1,
                    });
                } else {
                    self.push_stmt(c);
                }
            }
            '\n' => {
                if self.dialect == Dialect::TypeScript
                    && self.delims.is_empty()
                    && ts_statement_complete(&self.stmt)
                {
                    self.reset_stmt();
                    boundary = Some(Boundary {
                        level: ScopeLevel::Stmt,
                        end_offset: at + 1,
                    });
                } else {
                    self.push_stmt(' ');
                }
            }
            '=' => {
                if self.delims.is_empty() && !matches!(prev, Some('=' | '!' | '<' | '>' | '.')) {
                    self.assign_undo = Some(self.stmt_assign);
                    self.stmt_assign = true;
                }
                self.push_stmt(c);
            }
            c if c.is_whitespace() => {
                if !self.stmt.ends_with(' ') && !self.stmt.is_empty() {
                    self.push_stmt(' ');
                }
            }
            _ => self.push_stmt(c),
        }
        if !c.is_whitespace() && c != '/' {
            self.prev_sig = Some(c);
        }
        boundary
    }

    fn enter_string(&mut self, quote: char) {
        self.lex_mode = LexMode::StringLit;
        self.quote = quote;
        self.escape = false;
        self.regex_class = false;
        self.prev = None;
    }

    fn leave_literal(&mut self, closing: char) {
        self.lex_mode = LexMode::Code;
        self.prev = None;
        self.push_stmt(closing);
        self.prev_sig = Some(closing);
    }

    fn step_string(&mut self, c: char) -> Option<Boundary> {
        if self.escape {
            self.escape = false;
            return None;
        }
        match c {
            '\\' => self.escape = true,
            '\n' if self.dialect == Dialect::TypeScript => {
                // Unterminated single-line string or regex: recover at the newline.
                self.lex_mode = LexMode::Code;
                self.prev = None;
                let at = self.offset - 1;
                return self.step_code('\n', at);
            }
            '[' if self.quote == '/' => self.regex_class = true,
            ']' if self.quote == '/' => self.regex_class = false,
            c if c == self.quote && !(self.quote == '/' && self.regex_class) => {
                self.leave_literal(c);
            }
            _ => {}
        }
        None
    }

    fn step_block_comment(&mut self, c: char) {
        let prev = self.prev;
        self.prev = Some(c);
        match (prev, c) {
            (Some('*'), '/') => {
                self.comment_depth -= 1;
                self.prev = None;
                if self.comment_depth == 0 {
                    self.lex_mode = LexMode::Code;
                }
            }
            (Some('/'), '*') if self.dialect == Dialect::Rust => {
                self.comment_depth += 1;
                self.prev = None;
            }
            _ => {}
        }
    }

    fn step_char_lit(&mut self, c: char, at: usize) -> Option<Boundary> {
        match self.char_state {
            CharState::Start => {
                if c == '\\' {
                    self.char_state = CharState::Escaped;
                    self.escape = true;
                } else if c == '\'' {
                    self.leave_literal('\'');
                } else {
                    self.char_state = CharState::One;
                }
                None
            }
            CharState::One => {
                if c == '\'' {
                    self.leave_literal('\'');
                    None
                } else {
                    // A lifetime or loop label, not a character literal.
                    self.lex_mode = LexMode::Code;
                    self.prev = None;
                    self.step_code(c, at)
                }
            }
            CharState::Escaped => {
                if self.escape {
                    self.escape = false;
                } else if c == '\\' {
                    self.escape = true;
                } else if c == '\'' {
                    self.leave_literal('\'');
                }
                None
            }
        }
    }

    fn step_raw_string(&mut self, c: char) {
        match (self.raw_closing, c) {
            (_, '"') => {
                if self.raw_hashes == 0 {
                    self.leave_literal('"');
                } else {
                    self.raw_closing = Some(0);
                }
            }
            (Some(n), '#') => {
                let n = n + 1;
                if n == self.raw_hashes {
                    self.raw_closing = None;
                    self.leave_literal('"');
                } else {
                    self.raw_closing = Some(n);
                }
            }
            _ => self.raw_closing = None,
        }
    }

    fn step_template(&mut self, c: char) {
        if self.escape {
            self.escape = false;
            self.prev = None;
            return;
        }
        let prev = self.prev;
        self.prev = Some(c);
        match c {
            '\\' => self.escape = true,
            '`' => self.leave_literal('`'),
            '{' if prev == Some('$') => {
                self.delims.push(Delim::TemplateExpr);
                self.lex_mode = LexMode::Code;
                self.prev = None;
            }
            _ => {}
        }
    }

    /// Whether a `/` at this point starts a regular-expression literal.
    fn regex_allowed(&self) -> bool {
        match self.prev_sig {
            None => true,
            Some(p) if "(,=:[!&|?{};+-*%<>~^".contains(p) => true,
            Some(_) => {
                let t = self.stmt.trim_end();
                ["return", "typeof", "case", "do", "else", "in", "of", "void", "yield", "await"]
                    .iter()
                    .any(|kw| {
                        t.ends_with(kw)
                            && t[..t.len() - kw.len()]
                                .chars()
                                .next_back()
                                .is_none_or(|ch| !is_ident_char(ch))
                    })
            }
        }
    }

    fn function_header(&self) -> Option<FunctionHeader> {
        match self.dialect {
            Dialect::Rust => rust_function_header(&self.stmt),
            Dialect::TypeScript => ts_function_header(&self.stmt),
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// For a `"` following `text`, the number of `#`s if `text` ends in a raw
/// string opener (`r`, `r#`, `br##`, ...).
fn raw_string_hashes(text: &str) -> Option<usize> {
    let trimmed = text.trim_end_matches('#');
    let hashes = text.len() - trimmed.len();
    let before_r = trimmed.strip_suffix('r')?;
    let before = before_r.strip_suffix('b').unwrap_or(before_r);
    match before.chars().next_back() {
        Some(ch) if is_ident_char(ch) => None,
        _ => Some(hashes),
    }
}

#[derive(Debug)]
struct FunctionHeader {
    label: Option<String>,
    returns_value: bool,
}

fn rust_function_header(stmt: &str) -> Option<FunctionHeader> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:^|[^\w])fn\s+([A-Za-z_][A-Za-z0-9_]*)").unwrap());
    let caps = re.captures(stmt)?;
    let after = &stmt[caps.get(0).unwrap().end()..];
    let returns_value = after
        .split_once("->")
        .map(|(_, ty)| {
            let ty = ty.split(" where ").next().unwrap_or("").trim();
            !ty.is_empty() && ty != "()"
        })
        .unwrap_or(false);
    Some(FunctionHeader {
        label: Some(caps[1].to_string()),
        returns_value,
    })
}

fn ts_function_header(stmt: &str) -> Option<FunctionHeader> {
    static FUNCTION: OnceLock<Regex> = OnceLock::new();
    static BINDING: OnceLock<Regex> = OnceLock::new();
    static METHOD: OnceLock<Regex> = OnceLock::new();
    static RET: OnceLock<Regex> = OnceLock::new();
    let function = FUNCTION
        .get_or_init(|| Regex::new(r"(?:^|[^\w$])function\b\s*\*?\s*([A-Za-z_$][\w$]*)?").unwrap());
    let binding = BINDING
        .get_or_init(|| Regex::new(r"(?:const|let|var)\s+([A-Za-z_$][\w$]*)").unwrap());
    let method = METHOD.get_or_init(|| {
        Regex::new(
            r"^(?:(?:public|private|protected|static|async|get|set|override|readonly|abstract)\s+)*\*?\s*([A-Za-z_$][\w$]*)\s*(?:<[^(]*>)?\s*\(.*\)\s*(?::\s*[^{;=]+)?$",
        )
        .unwrap()
    });
    let ret = RET.get_or_init(|| Regex::new(r"\)\s*:\s*([^=;{]+?)\s*(?:=>)?\s*$").unwrap());

    let t = stmt.trim();
    let returns = |s: &str| {
        ret.captures(s)
            .map(|c| {
                let ty = c[1].trim();
                !matches!(ty, "void" | "any" | "unknown" | "undefined" | "never" | "")
            })
            .unwrap_or(false)
    };
    if let Some(c) = function.captures(t) {
        let label = c
            .get(1)
            .map(|m| m.as_str().to_string())
            .or_else(|| binding.captures(t).map(|b| b[1].to_string()));
        return Some(FunctionHeader {
            label,
            returns_value: returns(t),
        });
    }
    if t.ends_with("=>") {
        let label = binding.captures(t).map(|b| b[1].to_string());
        return Some(FunctionHeader {
            label,
            returns_value: returns(t),
        });
    }
    if let Some(c) = method.captures(t) {
        let name = &c[1];
        if matches!(
            name,
            "if" | "for" | "while" | "switch" | "catch" | "with" | "return" | "function" | "else"
        ) {
            return None;
        }
        return Some(FunctionHeader {
            label: Some(name.to_string()),
            returns_value: returns(t),
        });
    }
    None
}

/// Heuristic for a semicolon-free TypeScript statement ending at a newline.
fn ts_statement_complete(stmt: &str) -> bool {
    static CONTROL: OnceLock<Regex> = OnceLock::new();
    let t = stmt.trim();
    let Some(last) = t.chars().next_back() else {
        return false;
    };
    if !(is_ident_char(last) || matches!(last, ')' | ']' | '}' | '\'' | '"' | '`')) {
        return false;
    }
    let last_word: String = t
        .chars()
        .rev()
        .take_while(|c| is_ident_char(*c))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if matches!(
        last_word.as_str(),
        "else"
            | "do"
            | "try"
            | "finally"
            | "extends"
            | "implements"
            | "new"
            | "typeof"
            | "instanceof"
            | "in"
            | "of"
            | "as"
            | "async"
            | "export"
            | "import"
            | "default"
            | "class"
            | "interface"
            | "function"
            | "const"
            | "let"
            | "var"
            | "type"
            | "enum"
    ) {
        return false;
    }
    let control = CONTROL.get_or_init(|| {
        Regex::new(r"^(?:\}\s*)?(?:else\s+)?(?:if|for|while|switch|catch|with)\s*\(.*\)$").unwrap()
    });
    !control.is_match(t) && !t.starts_with('@')
}
