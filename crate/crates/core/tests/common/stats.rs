use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use dtv_core::scope::Task;
use dtv_core::stats::{changed_lines, classify_fix_shape, mcnemar_exact, sign_test_exact, FixShape, LineSets};

use super::ensure;

/// 2 * sum_{k <= min} C(n, k) / 2^n with exact integers.
pub fn exact_two_sided(a: usize, b: usize) -> f64 {
    let n = a + b;
    if n == 0 {
        return 1.0;
    }
    let mut c = BigUint::one();
    let mut total = BigUint::zero();
    for k in 0..=a.min(b) {
        if k > 0 {
            c = c * BigUint::from(n - k + 1) / BigUint::from(k);
        }
        total += &c;
    }
    let num = total * 2u32;
    let den = BigUint::one() << n;
    if num >= den {
        return 1.0;
    }
    // Scale so the quotient keeps ~60 significant bits.
    let shift = den.bits().saturating_sub(num.bits()) + 60;
    let q = (num << shift) / den;
    q.to_f64().unwrap() * 2f64.powi(-(shift as i32))
}

/// Published p-value thresholds, plus agreement with exact integer sums.
pub fn oracle_values() -> Result<(), String> {
    let checks: [(&str, f64, f64, f64); 4] = [
        ("mcnemar(13,105)", mcnemar_exact(13, 105), 0.0, 1e-3),
        ("mcnemar(21,50)", mcnemar_exact(21, 50), 0.0, 1e-3),
        ("mcnemar(7,26)", mcnemar_exact(7, 26), 1.2e-3, 1.4e-3),
        ("sign(129,21)", sign_test_exact(129, 21), 0.0, 1e-19),
    ];
    for (name, p, lo, hi) in checks {
        let ok = if lo > 0.0 { (lo..=hi).contains(&p) } else { p > 0.0 && p < hi };
        ensure(ok, || format!("{name} = {p:e}, bounds {lo:e}..{hi:e}"))?;
    }
    for (a, b) in [(13, 105), (21, 50), (7, 26), (129, 21)] {
        let want = exact_two_sided(a, b);
        let got = mcnemar_exact(a, b);
        ensure(((got - want) / want).abs() < 1e-9, || format!("({a},{b}): {got:e} vs exact {want:e}"))?;
    }
    Ok(())
}

fn set(xs: &[usize]) -> BTreeSet<usize> {
    xs.iter().copied().collect()
}

fn sets(n: usize, e: &[usize], c: &[usize]) -> LineSets {
    LineSets {
        n_r1: n,
        error_lines: set(e),
        changed_lines: set(c),
    }
}

/// `(name, line sets, expected label)`.
pub fn classifier_fixtures() -> Vec<(&'static str, LineSets, &'static str)> {
    let r1 = "fn main() {\n    let a = 1;\n    let b = a;\n    let c = b;\n}";
    let r2_top = format!("use std::io;\n{r1}");
    let ts1 = "const a = 1;\nconst b = a;\nconst c = q;\nconst d = c;";
    let ts2 = format!("import {{ q }} from './q';\n{ts1}");
    vec![
        ("empty first attempt", sets(0, &[1], &[1]), "UNKNOWN(extract_fail)"),
        ("identical attempts", sets(5, &[2], &[]), "UNKNOWN(no_op)"),
        ("no-op before missing errors", sets(5, &[], &[]), "UNKNOWN(no_op)"),
        ("half the lines changed", sets(4, &[1, 2, 3], &[1, 2]), "LOCAL"),
        ("over half the lines changed", sets(4, &[1, 2, 3], &[1, 2, 3]), "UNKNOWN(rewrite)"),
        ("rewrite before missing errors", sets(2, &[], &[1, 2]), "UNKNOWN(rewrite)"),
        ("no parsable error lines", sets(10, &[], &[2]), "UNKNOWN(no_error_lines)"),
        ("edit inside flagged lines", sets(10, &[2, 5], &[2]), "LOCAL"),
        ("edit away from flagged lines", sets(10, &[2], &[7]), "NONLOCAL"),
        ("edit on and off flagged lines", sets(10, &[2], &[2, 7]), "MIXED"),
        (
            "insertion above a flagged first line",
            LineSets::from_rounds(r1, "error[E0433]: x\n --> program.rs:1:1\n", &r2_top, Task::CToRust),
            "LOCAL",
        ),
        (
            "insertion at the top, error further down",
            LineSets::from_rounds(ts1, "3:11 error TS2304 Cannot find name 'q'.", &ts2, Task::JsToTs),
            "NONLOCAL",
        ),
    ]
}

pub fn classifier_suite() -> Result<(), String> {
    let fixtures = classifier_fixtures();
    ensure(fixtures.len() == 12, || format!("{} fixtures", fixtures.len()))?;
    for (name, s, want) in fixtures {
        let got: FixShape = classify_fix_shape(&s);
        ensure(got.name() == want, || format!("{name}: {} (want {want}) for {s:?}", got.name()))?;
    }
    Ok(())
}

/// Independent opcode simulator: exhaustive longest-block search (longest,
/// then leftmost in the first list, then leftmost in the second), recursion
/// on both sides, then gap walking.
fn brute_blocks(a: &[u8], b: &[u8], alo: usize, ahi: usize, blo: usize, bhi: usize, out: &mut Vec<(usize, usize, usize)>) {
    let mut best = (alo, blo, 0);
    for i in alo..ahi {
        for j in blo..bhi {
            let mut k = 0;
            while i + k < ahi && j + k < bhi && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best.2 {
                best = (i, j, k);
            }
        }
    }
    let (i, j, k) = best;
    if k == 0 {
        return;
    }
    brute_blocks(a, b, alo, i, blo, j, out);
    out.push(best);
    brute_blocks(a, b, i + k, ahi, j + k, bhi, out);
}

pub fn brute_changed(a: &[u8], b: &[u8]) -> BTreeSet<usize> {
    let mut blocks = Vec::new();
    brute_blocks(a, b, 0, a.len(), 0, b.len(), &mut blocks);
    blocks.push((a.len(), b.len(), 0));
    let mut marked = BTreeSet::new();
    let (mut pi, mut pj) = (0, 0);
    for (i, j, k) in blocks {
        if i > pi {
            marked.extend(pi + 1..=i);
        } else if j > pj {
            marked.insert((pi + 1).min(a.len().max(1)));
        }
        pi = i + k;
        pj = j + k;
    }
    marked
}

pub fn all_lists(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &frontier {
            for s in *b"ab" {
                let mut m: Vec<u8> = l.clone();
                m.push(s);
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every pair of line lists of length at most 4 over two symbols.
pub fn changed_lines_exhaustive() -> Result<usize, String> {
    let lists = all_lists(4);
    let mut checked = 0;
    for a in &lists {
        for b in &lists {
            let la: Vec<String> = a.iter().map(|c| (*c as char).to_string()).collect();
            let lb: Vec<String> = b.iter().map(|c| (*c as char).to_string()).collect();
            let got = changed_lines(&la, &lb);
            let want = brute_changed(a, b);
            ensure(got == want, || format!("{la:?} -> {lb:?}: {got:?} vs {want:?}"))?;
            checked += 1;
        }
    }
    Ok(checked)
}
