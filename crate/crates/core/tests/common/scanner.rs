use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};

use dtv_core::scanner::{GroupStack, LexMode};
use dtv_core::scope::{Dialect, ScopeLevel};

/// Program text plus the byte ranges of every string, char, regex and
/// comment literal in it.
pub struct Built {
    pub text: String,
    pub opaque: Vec<(usize, usize)>,
}

struct Builder<'a> {
    dialect: Dialect,
    tape: &'a [u8],
    pos: usize,
    out: Built,
    names: usize,
}

const STR_BITS: &[&str] = &[";", "{", "}", "/", "*", " ", "a", "//", "/*", "(", "]"];

impl Builder<'_> {
    fn pick(&mut self, n: u8) -> u8 {
        let v = self.tape.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        v % n
    }

    fn code(&mut self, s: &str) {
        self.out.text.push_str(s);
    }

    fn opaque(&mut self, s: &str) {
        let start = self.out.text.len();
        self.out.text.push_str(s);
        self.out.opaque.push((start, self.out.text.len()));
    }

    fn filler(&mut self, max: u8) -> String {
        let n = self.pick(max);
        (0..n).map(|_| STR_BITS[self.pick(STR_BITS.len() as u8) as usize]).collect()
    }

    fn name(&mut self) -> String {
        self.names += 1;
        format!("v{}", self.names)
    }

    fn literal(&mut self) {
        let body = self.filler(6);
        let ts = self.dialect == Dialect::TypeScript;
        match self.pick(6) {
            0 => self.opaque(&format!("\"{body}\\\"{body}\"")),
            1 if ts => self.opaque(&format!("'{body}\\'x'")),
            1 => self.opaque("'}'"),
            2 if ts => self.opaque(&format!("`{body}`")),
            2 => self.opaque(&format!("r#\"{body}\"{body}\"#")),
            3 if ts => self.opaque("/[;}{]+/g"),
            3 => self.opaque("';'"),
            4 => self.opaque(&format!("\"{body}\\\\\"")),
            _ => self.code("1"),
        }
    }

    fn comment(&mut self) {
        let body = self.filler(6).replace("*/", "* /").replace("/*", "/ *");
        if self.pick(2) == 0 {
            self.opaque(&format!("// {body}\n"));
        } else {
            self.opaque(&format!("/* {body} */"));
        }
        self.code("\n");
    }

    fn statement(&mut self, depth: usize) {
        let indent = "    ".repeat(depth);
        match self.pick(5) {
            0 | 1 => {
                let n = self.name();
                let kw = if self.dialect == Dialect::Rust { "let" } else { "const" };
                self.code(&format!("{indent}{kw} {n} = "));
                self.literal();
                self.code(";\n");
            }
            2 => {
                self.code(&indent);
                self.comment();
            }
            3 if depth < 4 => {
                self.code(&format!("{indent}if x {{\n"));
                self.body(depth + 1);
                self.code(&format!("{indent}}}\n"));
            }
            _ => self.code(&format!("{indent}f(1);\n")),
        }
    }

    fn body(&mut self, depth: usize) {
        let n = self.pick(4);
        for _ in 0..n {
            self.statement(depth);
        }
    }

    fn program(mut self) -> Built {
        let funcs = 1 + self.pick(3);
        for i in 0..funcs {
            if self.pick(3) == 0 {
                self.comment();
            }
            match self.dialect {
                Dialect::Rust => self.code(&format!("fn f{i}() {{\n")),
                Dialect::TypeScript => self.code(&format!("function f{i}(): void {{\n")),
            }
            self.body(1);
            self.code("}\n");
        }
        self.out
    }
}

pub fn build(dialect: Dialect, tape: &[u8]) -> Built {
    Builder {
        dialect,
        tape,
        pos: 0,
        out: Built {
            text: String::new(),
            opaque: Vec::new(),
        },
        names: 0,
    }
    .program()
}

pub fn check(dialect: Dialect, tape: &[u8], cuts: &[usize]) -> Result<(), TestCaseError> {
    let Built { text, opaque } = build(dialect, tape);
    let (mut full, boundaries) = GroupStack::scan(dialect, &text);

    for b in &boundaries {
        for &(s, e) in &opaque {
            prop_assert!(!(s < b.end_offset && b.end_offset <= e), "boundary {b:?} inside {s}..{e} of {text:?}");
        }
        let (prefix, _) = GroupStack::scan(dialect, &text[..b.end_offset]);
        prop_assert_eq!(prefix.lex_mode, LexMode::Code);
    }

    prop_assert!(full.frames.is_empty(), "{text:?}");
    prop_assert_eq!(full.delimiter_depth, 0);
    prop_assert!(!full.is_poisoned());
    let end = full.finish();
    prop_assert_eq!(end.map(|b| b.level), Some(ScopeLevel::Program));

    // Incremental feeding in arbitrary pieces sees the same boundaries, and
    // the stack saved at each one equals a fresh scan of that prefix.
    let mut stack = GroupStack::new(dialect);
    let mut seen = Vec::new();
    let mut saved = Vec::new();
    let mut pos = 0;
    let mut cut = cuts.iter().cycle();
    while pos < text.len() {
        let step = 1 + cut.next().copied().unwrap_or(7);
        let chunk_end = (pos + step).min(text.len());
        let (used, b) = stack.feed_until_boundary(&text[pos..chunk_end]);
        pos += used;
        if let Some(b) = b {
            prop_assert_eq!(b.end_offset, pos);
            seen.push(b);
            saved.push((pos, stack.clone()));
        }
    }
    prop_assert_eq!(&seen, &boundaries);
    for (off, s) in saved.iter().step_by(3) {
        let (fresh, _) = GroupStack::scan(dialect, &text[..*off]);
        prop_assert_eq!(&fresh, s);
        let mut resumed = s.clone();
        resumed.feed(&text[*off..]);
        let (whole, _) = GroupStack::scan(dialect, &text);
        prop_assert_eq!(&resumed, &whole);
    }
    Ok(())
}

pub fn config() -> Config {
    Config {
        cases: 500,
        rng_seed: RngSeed::Fixed(0x5ca9),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn inputs() -> impl Strategy<Value = (Vec<u8>, Vec<usize>)> {
    (prop::collection::vec(any::<u8>(), 0..160), prop::collection::vec(0usize..24, 1..8))
}

/// Both dialects, `config().cases` generated programs each.
pub fn suite() -> Result<(), String> {
    for dialect in [Dialect::Rust, Dialect::TypeScript] {
        let mut runner = TestRunner::new(config());
        runner
            .run(&inputs(), |(tape, cuts)| check(dialect, &tape, &cuts))
            .map_err(|e| format!("{dialect:?}: {e}"))?;
    }
    Ok(())
}
