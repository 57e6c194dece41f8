//! Committed checkpoints and structure-aware rollback targets.

use crate::scanner::GroupStack;
use crate::scope::{Dialect, ScopeLevel};

/// A verified prefix together with the scanner state that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub id: usize,
    pub prefix: String,
    pub stack: GroupStack,
    pub tokens_committed: usize,
    pub meta_step: usize,
}

/// Ordered checkpoint list. Index 0 is always the empty-prefix checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointLog {
    items: Vec<Checkpoint>,
    next_id: usize,
}

impl CheckpointLog {
    pub fn new(dialect: Dialect) -> Self {
        CheckpointLog {
            items: vec![Checkpoint {
                id: 0,
                prefix: String::new(),
                stack: GroupStack::new(dialect),
                tokens_committed: 0,
                meta_step: 0,
            }],
            next_id: 1,
        }
    }

    /// Appends a checkpoint and returns its id.
    pub fn make_checkpoint(
        &mut self,
        prefix: &str,
        stack: &GroupStack,
        tokens_committed: usize,
        meta_step: usize,
    ) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.items.push(Checkpoint {
            id,
            prefix: prefix.to_string(),
            stack: stack.clone(),
            tokens_committed,
            meta_step,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn latest(&self) -> &Checkpoint {
        self.items.last().expect("checkpoint log always holds the root")
    }

    pub fn root(&self) -> &Checkpoint {
        &self.items[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Checkpoint> {
        self.items.iter()
    }

    /// Drops every checkpoint committed after `id`.
    pub fn truncate_after(&mut self, id: usize) {
        if let Some(pos) = self.items.iter().position(|c| c.id == id) {
            self.items.truncate(pos + 1);
        }
    }

    /// See [`rollback_to`].
    pub fn rollback_target(&self, stack: &GroupStack, level: ScopeLevel) -> &Checkpoint {
        rollback_to(&self.items, stack, level)
    }
}

/// Picks the checkpoint to restore for a failure observed with scanner state
/// `stack`.
///
/// `Stmt` retries the last statement (the most recent checkpoint). `Block`
/// and `Func` truncate to the start of the innermost group of that kind: the
/// latest checkpoint at or before the group's opening brace. A `Block` frame
/// only counts when it sits inside the innermost function; with no such frame
/// the level falls back to `Func`, and with no open function to the empty
/// prefix.
pub fn rollback_to<'a>(
    checkpoints: &'a [Checkpoint],
    stack: &GroupStack,
    level: ScopeLevel,
) -> &'a Checkpoint {
    assert!(!checkpoints.is_empty(), "the empty-prefix checkpoint must exist");
    let limit = match level {
        ScopeLevel::Stmt => return checkpoints.last().unwrap(),
        ScopeLevel::Block => stack
            .frames
            .iter()
            .rev()
            .take_while(|f| f.kind != ScopeLevel::Func)
            .find(|f| f.kind == ScopeLevel::Block)
            .or_else(|| stack.enclosing_function())
            .map(|f| f.open_offset),
        ScopeLevel::Func => stack.enclosing_function().map(|f| f.open_offset),
        ScopeLevel::Program => None,
    };
    match limit {
        Some(limit) => checkpoints
            .iter()
            .rev()
            .find(|c| c.prefix.len() <= limit)
            .unwrap_or(&checkpoints[0]),
        None => &checkpoints[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_for(text: &str, cuts: &[usize]) -> CheckpointLog {
        let mut log = CheckpointLog::new(Dialect::Rust);
        for (i, &cut) in cuts.iter().enumerate() {
            let (stack, _) = GroupStack::scan(Dialect::Rust, &text[..cut]);
            log.make_checkpoint(&text[..cut], &stack, cut, i + 1);
        }
        log
    }

    #[test]
    fn stmt_returns_latest() {
        let text = "fn main() { let x = 1;";
        let log = log_for(text, &[text.len()]);
        let (stack, _) = GroupStack::scan(Dialect::Rust, text);
        assert_eq!(log.rollback_target(&stack, ScopeLevel::Stmt).prefix, text);
    }

    #[test]
    fn func_without_inner_checkpoint_goes_to_root() {
        let text = "fn main() { let x = 1; let y = z;";
        let log = CheckpointLog::new(Dialect::Rust);
        let (stack, _) = GroupStack::scan(Dialect::Rust, text);
        let c = log.rollback_target(&stack, ScopeLevel::Func);
        assert_eq!(c.id, 0);
        assert_eq!(c.prefix, "");
    }

    #[test]
    fn block_picks_latest_checkpoint_before_open() {
        // Checkpoints at 0, 24, 51; the block opens at 30.
        let text = "fn main() { let ab = 12; if x { let bbbbbbbbbb = 2; let c = 3;";
        assert_eq!(&text[30..31], "{");
        assert_eq!(&text[23..24], ";");
        assert_eq!(&text[50..51], ";");
        let mut log = CheckpointLog::new(Dialect::Rust);
        for cut in [24usize, 51] {
            let (stack, _) = GroupStack::scan(Dialect::Rust, &text[..cut]);
            log.make_checkpoint(&text[..cut], &stack, cut, 1);
        }
        let (stack, _) = GroupStack::scan(Dialect::Rust, text);
        assert_eq!(stack.frames[1].open_offset, 30);
        assert_eq!(log.rollback_target(&stack, ScopeLevel::Block).prefix.len(), 24);
        assert_eq!(log.rollback_target(&stack, ScopeLevel::Func).prefix.len(), 0);
        assert_eq!(log.rollback_target(&stack, ScopeLevel::Stmt).prefix.len(), 51);
        assert_eq!(text.len(), 62);
    }

    #[test]
    fn block_outside_function_falls_back() {
        let text = "impl A { fn f(&self) { let x = 1;";
        let log = log_for(text, &[text.len()]);
        let (stack, _) = GroupStack::scan(Dialect::Rust, text);
        let block = log.rollback_target(&stack, ScopeLevel::Block);
        let func = log.rollback_target(&stack, ScopeLevel::Func);
        assert_eq!(block.id, func.id);
        assert_eq!(block.id, 0);
    }

    #[test]
    fn commits_are_ordered_and_truncatable() {
        let text = "fn main() { let a = 1; let b = 2;";
        let mut log = log_for(text, &[22, text.len()]);
        let toks: Vec<_> = log.iter().map(|c| c.tokens_committed).collect();
        assert!(toks.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(log.len(), 3);
        log.truncate_after(1);
        assert_eq!(log.len(), 2);
        assert_eq!(log.latest().prefix.len(), 22);
    }

    #[test]
    fn checkpoint_round_trip() {
        let text = "fn main() { let a = 1;";
        let log = log_for(text, &[text.len()]);
        let c = log.latest();
        let (stack, _) = GroupStack::scan(Dialect::Rust, &c.prefix);
        assert_eq!(stack, c.stack);
        assert_eq!(c.prefix, text);
    }
}
