//! Longest-matching-block sequence matching and line-level change sets.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpTag {
    Equal,
    Replace,
    Delete,
    Insert,
}

/// `a[i1..i2]` relates to `b[j1..j2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Opcode {
    pub tag: OpTag,
    pub i1: usize,
    pub i2: usize,
    pub j1: usize,
    pub j2: usize,
}

/// `a[i..i+size] == b[j..j+size]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub i: usize,
    pub j: usize,
    pub size: usize,
}

/// Ratcliff/Obershelp matcher without a junk predicate. Sequences of 200 or
/// more elements treat elements that fill more than 1% of `b` as popular:
/// they never seed a match but can extend one.
pub struct SequenceMatcher<'a, T> {
    a: &'a [T],
    b: &'a [T],
    b2j: HashMap<&'a T, Vec<usize>>,
}

impl<'a, T: Eq + Hash> SequenceMatcher<'a, T> {
    pub fn new(a: &'a [T], b: &'a [T]) -> Self {
        let mut b2j: HashMap<&T, Vec<usize>> = HashMap::new();
        for (j, x) in b.iter().enumerate() {
            b2j.entry(x).or_default().push(j);
        }
        let n = b.len();
        if n >= 200 {
            let ntest = n / 100 + 1;
            b2j.retain(|_, js| js.len() <= ntest);
        }
        SequenceMatcher { a, b, b2j }
    }

    /// Longest block inside the given ranges; among equals the one starting
    /// earliest in `a`, then earliest in `b`.
    pub fn find_longest_match(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> Block {
        let (a, b) = (self.a, self.b);
        let (mut besti, mut bestj, mut bestsize) = (alo, blo, 0);
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for (i, x) in a.iter().enumerate().take(ahi).skip(alo) {
            let mut next: HashMap<usize, usize> = HashMap::new();
            if let Some(js) = self.b2j.get(x) {
                for &j in js {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                    next.insert(j, k);
                    if k > bestsize {
                        besti = i + 1 - k;
                        bestj = j + 1 - k;
                        bestsize = k;
                    }
                }
            }
            j2len = next;
        }
        while besti > alo && bestj > blo && a[besti - 1] == b[bestj - 1] {
            besti -= 1;
            bestj -= 1;
            bestsize += 1;
        }
        while besti + bestsize < ahi && bestj + bestsize < bhi && a[besti + bestsize] == b[bestj + bestsize] {
            bestsize += 1;
        }
        Block {
            i: besti,
            j: bestj,
            size: bestsize,
        }
    }

    /// Maximal matching blocks in order, adjacent ones merged, terminated by
    /// a zero-size sentinel at `(len a, len b)`.
    pub fn matching_blocks(&self) -> Vec<Block> {
        let (la, lb) = (self.a.len(), self.b.len());
        let mut queue = vec![(0, la, 0, lb)];
        let mut blocks = Vec::new();
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let m = self.find_longest_match(alo, ahi, blo, bhi);
            if m.size > 0 {
                blocks.push(m);
                if alo < m.i && blo < m.j {
                    queue.push((alo, m.i, blo, m.j));
                }
                if m.i + m.size < ahi && m.j + m.size < bhi {
                    queue.push((m.i + m.size, ahi, m.j + m.size, bhi));
                }
            }
        }
        blocks.sort();
        let mut merged: Vec<Block> = Vec::new();
        for m in blocks {
            match merged.last_mut() {
                Some(p) if p.i + p.size == m.i && p.j + p.size == m.j => p.size += m.size,
                _ => merged.push(m),
            }
        }
        merged.push(Block { i: la, j: lb, size: 0 });
        merged
    }

    pub fn opcodes(&self) -> Vec<Opcode> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        for m in self.matching_blocks() {
            let tag = match (i < m.i, j < m.j) {
                (true, true) => Some(OpTag::Replace),
                (true, false) => Some(OpTag::Delete),
                (false, true) => Some(OpTag::Insert),
                (false, false) => None,
            };
            if let Some(tag) = tag {
                out.push(Opcode {
                    tag,
                    i1: i,
                    i2: m.i,
                    j1: j,
                    j2: m.j,
                });
            }
            i = m.i + m.size;
            j = m.j + m.size;
            if m.size > 0 {
                out.push(Opcode {
                    tag: OpTag::Equal,
                    i1: m.i,
                    i2: i,
                    j1: m.j,
                    j2: j,
                });
            }
        }
        out
    }
}

/// 1-based lines of `r1` touched by the edit to `r2`. Replaced and deleted
/// lines are marked directly; an insertion marks the line right after it,
/// line 1 at the top and the last line at the bottom.
pub fn lines_from_opcodes(ops: &[Opcode], n_r1: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for op in ops {
        match op.tag {
            OpTag::Equal => {}
            OpTag::Replace | OpTag::Delete => out.extend(op.i1 + 1..=op.i2),
            OpTag::Insert => {
                out.insert((op.i1 + 1).min(n_r1.max(1)));
            }
        }
    }
    out
}

pub fn changed_lines<S: AsRef<str>>(r1: &[S], r2: &[S]) -> BTreeSet<usize> {
    let a: Vec<&str> = r1.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = r2.iter().map(AsRef::as_ref).collect();
    lines_from_opcodes(&SequenceMatcher::new(&a, &b).opcodes(), a.len())
}
