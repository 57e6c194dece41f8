//! Scope levels and translation tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Granularity of a structural boundary, ordered `Stmt < Block < Func < Program`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeLevel {
    Stmt,
    Block,
    Func,
    Program,
}

impl ScopeLevel {
    pub const ALL: [ScopeLevel; 4] = [
        ScopeLevel::Stmt,
        ScopeLevel::Block,
        ScopeLevel::Func,
        ScopeLevel::Program,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScopeLevel::Stmt => "stmt",
            ScopeLevel::Block => "block",
            ScopeLevel::Func => "func",
            ScopeLevel::Program => "program",
        }
    }
}

impl fmt::Display for ScopeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScopeLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stmt" => Ok(ScopeLevel::Stmt),
            "block" => Ok(ScopeLevel::Block),
            "func" => Ok(ScopeLevel::Func),
            "program" => Ok(ScopeLevel::Program),
            other => Err(format!("unknown scope level `{other}`")),
        }
    }
}

/// Translation task. Determines the target dialect and the oracle suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "c-to-rust")]
    CToRust,
    #[serde(rename = "js-to-ts")]
    JsToTs,
}

impl Task {
    pub fn dialect(self) -> Dialect {
        match self {
            Task::CToRust => Dialect::Rust,
            Task::JsToTs => Dialect::TypeScript,
        }
    }

    pub fn source_extension(self) -> &'static str {
        match self {
            Task::CToRust => "c",
            Task::JsToTs => "js",
        }
    }

    pub fn target_extension(self) -> &'static str {
        match self {
            Task::CToRust => "rs",
            Task::JsToTs => "ts",
        }
    }

    pub fn source_language(self) -> &'static str {
        match self {
            Task::CToRust => "C",
            Task::JsToTs => "JavaScript",
        }
    }

    pub fn target_language(self) -> &'static str {
        match self {
            Task::CToRust => "Rust",
            Task::JsToTs => "TypeScript",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::CToRust => "c-to-rust",
            Task::JsToTs => "js-to-ts",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c-to-rust" | "c2rust" => Ok(Task::CToRust),
            "js-to-ts" | "js2ts" => Ok(Task::JsToTs),
            other => Err(format!("unknown task `{other}` (expected c-to-rust or js-to-ts)")),
        }
    }
}

/// Target-language lexical dialect used by the prefix scanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dialect {
    Rust,
    TypeScript,
}
