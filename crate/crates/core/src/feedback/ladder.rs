use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scope::ScopeLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryMode {
    Inline,
    Patch,
}

impl RetryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetryMode::Inline => "inline",
            RetryMode::Patch => "patch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryRung {
    pub scope: ScopeLevel,
    pub mode: RetryMode,
    pub max_retries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LadderError {
    #[error("a retry ladder needs at least one rung")]
    Empty,
    #[error("rung {0} allows zero retries")]
    ZeroRetries(usize),
    #[error("rung {0} is out of order")]
    OutOfOrder(usize),
    #[error("rung scope must be below program scope (rung {0})")]
    ProgramScope(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RetryRung>", into = "Vec<RetryRung>")]
pub struct RetryLadder {
    rungs: Vec<RetryRung>,
}

impl TryFrom<Vec<RetryRung>> for RetryLadder {
    type Error = LadderError;

    fn try_from(rungs: Vec<RetryRung>) -> Result<Self, LadderError> {
        RetryLadder::new(rungs)
    }
}

impl From<RetryLadder> for Vec<RetryRung> {
    fn from(l: RetryLadder) -> Self {
        l.rungs
    }
}

impl Default for RetryLadder {
    fn default() -> Self {
        use RetryMode::*;
        use ScopeLevel::*;
        let r = |scope, mode, max_retries| RetryRung {
            scope,
            mode,
            max_retries,
        };
        RetryLadder {
            rungs: vec![
                r(Stmt, Inline, 3),
                r(Stmt, Patch, 2),
                r(Block, Inline, 2),
                r(Block, Patch, 2),
                r(Func, Inline, 2),
                r(Func, Patch, 1),
            ],
        }
    }
}

impl RetryLadder {
    /// Rungs must run finer to coarser, Inline before Patch within a scope.
    pub fn new(rungs: Vec<RetryRung>) -> Result<Self, LadderError> {
        if rungs.is_empty() {
            return Err(LadderError::Empty);
        }
        for (i, r) in rungs.iter().enumerate() {
            if r.max_retries == 0 {
                return Err(LadderError::ZeroRetries(i));
            }
            if r.scope == ScopeLevel::Program {
                return Err(LadderError::ProgramScope(i));
            }
            if i > 0 && (rungs[i - 1].scope, rungs[i - 1].mode) > (r.scope, r.mode) {
                return Err(LadderError::OutOfOrder(i));
            }
        }
        Ok(RetryLadder { rungs })
    }

    pub fn rungs(&self) -> &[RetryRung] {
        &self.rungs
    }

    pub fn total_retries(&self) -> usize {
        self.rungs.iter().map(|r| r.max_retries).sum()
    }

    /// Every rung pinned to statement-scope inline retries, same counts.
    pub fn clamped_to_stmt(&self) -> RetryLadder {
        RetryLadder {
            rungs: self
                .rungs
                .iter()
                .map(|r| RetryRung {
                    scope: ScopeLevel::Stmt,
                    mode: RetryMode::Inline,
                    max_retries: r.max_retries,
                })
                .collect(),
        }
    }
}

/// Position of one anchor on the ladder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderCursor {
    pub rung: usize,
    pub used: usize,
}

impl LadderCursor {
    /// Takes one retry, escalating past exhausted rungs. `None` once the ladder
    /// is spent.
    pub fn take(&mut self, ladder: &RetryLadder) -> Option<RetryRung> {
        while let Some(r) = ladder.rungs.get(self.rung) {
            if self.used < r.max_retries {
                self.used += 1;
                return Some(*r);
            }
            self.rung += 1;
            self.used = 0;
        }
        None
    }

    /// Abandons the current rung.
    pub fn escalate(&mut self) {
        self.rung += 1;
        self.used = 0;
    }

    pub fn exhausted(&self, ladder: &RetryLadder) -> bool {
        self.rung >= ladder.rungs.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_walk() {
        let l = RetryLadder::default();
        assert_eq!(l.total_retries(), 12);
        let mut c = LadderCursor::default();
        let walk: Vec<_> = std::iter::from_fn(|| c.take(&l)).map(|r| (r.scope, r.mode)).collect();
        assert_eq!(walk.len(), 12);
        assert_eq!(walk[0], (ScopeLevel::Stmt, RetryMode::Inline));
        assert_eq!(walk[3], (ScopeLevel::Stmt, RetryMode::Patch));
        assert_eq!(walk[11], (ScopeLevel::Func, RetryMode::Patch));
        assert!(c.exhausted(&l));
    }

    #[test]
    fn escalate_skips_rest_of_rung() {
        let l = RetryLadder::default();
        let mut c = LadderCursor::default();
        c.take(&l);
        c.escalate();
        assert_eq!(c.take(&l).map(|r| r.mode), Some(RetryMode::Patch));
    }

    #[test]
    fn validation() {
        let r = |scope, mode| RetryRung {
            scope,
            mode,
            max_retries: 1,
        };
        assert_eq!(RetryLadder::new(vec![]), Err(LadderError::Empty));
        assert_eq!(
            RetryLadder::new(vec![r(ScopeLevel::Block, RetryMode::Inline), r(ScopeLevel::Stmt, RetryMode::Inline)]),
            Err(LadderError::OutOfOrder(1))
        );
        assert_eq!(
            RetryLadder::new(vec![r(ScopeLevel::Stmt, RetryMode::Patch), r(ScopeLevel::Stmt, RetryMode::Inline)]),
            Err(LadderError::OutOfOrder(1))
        );
        let clamped = RetryLadder::default().clamped_to_stmt();
        assert_eq!(clamped.total_retries(), 12);
        assert!(clamped.rungs().iter().all(|r| r.scope == ScopeLevel::Stmt));
        assert!(RetryLadder::new(clamped.rungs().to_vec()).is_ok());
    }

    #[test]
    fn serde_validates() {
        let json = serde_json::to_string(&RetryLadder::default()).unwrap();
        let back: RetryLadder = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RetryLadder::default());
        assert!(serde_json::from_str::<RetryLadder>("[]").is_err());
    }
}
