//! Pass rates, token costs, exact paired tests, bootstrap intervals and the
//! fix-shape analytics.

mod fixshape;
mod seqmatch;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{map_range, Parallelism};
use crate::strategy::CaseOutcome;

pub use fixshape::{
    classify_fix_shape, extract_error_lines, per_code_rescue, shared_code_ratio, CodeRescue, FixShape, LineSets,
    ShapeLabel, UnknownReason, REWRITE_THRESHOLD,
};
pub use seqmatch::{changed_lines, lines_from_opcodes, Block, OpTag, Opcode, SequenceMatcher};

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no values")]
    Empty,
    #[error("trimming removes every value")]
    AllTrimmed,
    #[error("case ids differ between runs (only in A: {only_a:?}; only in B: {only_b:?})")]
    AsymmetricIds { only_a: Vec<String>, only_b: Vec<String> },
}

/// P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
pub fn binomial_half_cdf(k: usize, n: usize) -> f64 {
    if k >= n {
        return 1.0;
    }
    let mut ln_c = 0.0f64;
    let mut terms = Vec::with_capacity(k + 1);
    for i in 0..=k {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        terms.push(ln_c);
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    (top + sum.ln() - n as f64 * std::f64::consts::LN_2).exp()
}

/// Two-sided exact binomial test on the discordant counts of a paired
/// comparison.
pub fn mcnemar_exact(only_a: usize, only_b: usize) -> f64 {
    let n = only_a + only_b;
    if n == 0 {
        return 1.0;
    }
    (2.0 * binomial_half_cdf(only_a.min(only_b), n)).min(1.0)
}

/// Exact sign test over discordant (earlier, later) pairs.
pub fn sign_test_exact(earlier: usize, later: usize) -> f64 {
    mcnemar_exact(earlier, later)
}

/// `<0.001` below one in a thousand, three decimals otherwise.
pub fn format_p(p: f64) -> String {
    if p < 1e-3 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Linear interpolation between closest ranks; `sorted` must be ascending.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap (2.5, 97.5) of the mean. Resample `i` draws from its
/// own ChaCha stream, so the result does not depend on scheduling.
pub fn bootstrap_ci_mean_with(
    values: &[f64],
    resamples: usize,
    seed: u64,
    mode: Parallelism,
) -> Result<Interval, StatsError> {
    let m = mean(values).ok_or(StatsError::Empty)?;
    let n = values.len();
    let mut means = map_range(mode, resamples.max(1), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let total: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
        total / n as f64
    });
    means.sort_by(f64::total_cmp);
    Ok(Interval {
        mean: m,
        lo: percentile(&means, 0.025),
        hi: percentile(&means, 0.975),
    })
}

pub fn bootstrap_ci_mean(values: &[f64], resamples: usize, seed: u64) -> Result<Interval, StatsError> {
    bootstrap_ci_mean_with(values, resamples, seed, Parallelism::Parallel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: f64,
    pub pass_rate: f64,
}

/// Fraction of all cases whose first pass cost at most `k` source-token
/// multiples, from the first-pass cost of each case (`None` for failures).
pub fn cumulative_curve_from(first_pass_k: &[Option<f64>], k_grid: &[f64]) -> Vec<CurvePoint> {
    let n = first_pass_k.len().max(1) as f64;
    k_grid
        .iter()
        .map(|&k| CurvePoint {
            k,
            pass_rate: first_pass_k.iter().filter(|x| x.is_some_and(|v| v <= k)).count() as f64 / n,
        })
        .collect()
}

pub fn cumulative_curve(outcomes: &[CaseOutcome], k_grid: &[f64]) -> Vec<CurvePoint> {
    let ks: Vec<Option<f64>> = outcomes
        .iter()
        .map(|o| if o.passed { o.k_at_first_pass() } else { None })
        .collect();
    cumulative_curve_from(&ks, k_grid)
}

/// Mean after dropping the `floor(f * n)` largest and smallest values.
pub fn trimmed_mean_delta(deltas: &[f64], trim: f64) -> Result<f64, StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::Empty);
    }
    let cut = (trim.max(0.0) * deltas.len() as f64).floor() as usize;
    if 2 * cut >= deltas.len() {
        return Err(StatsError::AllTrimmed);
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(mean(&sorted[cut..sorted.len() - cut]).expect("nonempty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairedTable {
    pub n: usize,
    pub only_a: usize,
    pub only_b: usize,
    pub both: usize,
    pub neither: usize,
}

impl PairedTable {
    pub fn from_flags(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut t = PairedTable::default();
        for (a, b) in pairs {
            t.n += 1;
            match (a, b) {
                (true, true) => t.both += 1,
                (true, false) => t.only_a += 1,
                (false, true) => t.only_b += 1,
                (false, false) => t.neither += 1,
            }
        }
        t
    }

    /// Pairs two runs by case id; the id sets must match exactly.
    pub fn from_outcomes(a: &[CaseOutcome], b: &[CaseOutcome]) -> Result<Self, StatsError> {
        let (ma, mb) = (by_id(a), by_id(b));
        check_ids(&ma, &mb)?;
        Ok(PairedTable::from_flags(ma.iter().map(|(id, x)| (x.passed, mb[id].passed))))
    }

    /// Pass-rate difference B minus A, in percentage points.
    pub fn diff_pp(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.only_b as f64 - self.only_a as f64) / self.n as f64 * 100.0
        }
    }

    pub fn p_value(&self) -> f64 {
        mcnemar_exact(self.only_a, self.only_b)
    }
}

pub fn by_id(outcomes: &[CaseOutcome]) -> BTreeMap<&str, &CaseOutcome> {
    outcomes.iter().map(|o| (o.case_id.as_str(), o)).collect()
}

pub fn check_ids<A, B>(a: &BTreeMap<&str, A>, b: &BTreeMap<&str, B>) -> Result<(), StatsError> {
    let ka: BTreeSet<&str> = a.keys().copied().collect();
    let kb: BTreeSet<&str> = b.keys().copied().collect();
    if ka == kb {
        return Ok(());
    }
    Err(StatsError::AsymmetricIds {
        only_a: ka.difference(&kb).map(|s| s.to_string()).collect(),
        only_b: kb.difference(&ka).map(|s| s.to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub n: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub avg_tokens: f64,
    pub avg_k: f64,
    /// Mean tokens over passing cases with its bootstrap interval.
    pub tokens_per_pass: Option<Interval>,
}

pub fn marginal(outcomes: &[CaseOutcome], resamples: usize, seed: u64) -> Marginal {
    let n = outcomes.len();
    let passed: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.passed)
        .map(|o| o.tokens_total as f64)
        .collect();
    let tokens: Vec<f64> = outcomes.iter().map(|o| o.tokens_total as f64).collect();
    let ks: Vec<f64> = outcomes.iter().map(CaseOutcome::k).collect();
    Marginal {
        n,
        passed: passed.len(),
        pass_rate: if n == 0 { 0.0 } else { passed.len() as f64 / n as f64 },
        avg_tokens: mean(&tokens).unwrap_or(0.0),
        avg_k: mean(&ks).unwrap_or(0.0),
        tokens_per_pass: bootstrap_ci_mean(&passed, resamples, seed).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tests() {
        assert_eq!(mcnemar_exact(0, 0), 1.0);
        assert_eq!(mcnemar_exact(1, 1), 1.0);
        assert!(mcnemar_exact(13, 105) < 1e-3);
        let p = mcnemar_exact(7, 26);
        assert!((1.2e-3..=1.4e-3).contains(&p), "{p}");
        assert!(sign_test_exact(129, 21) < 1e-19);
        assert!(sign_test_exact(24, 4) < 1e-3);
        assert!((mcnemar_exact(0, 4) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn p_display() {
        assert_eq!(format_p(0.0004), "<0.001");
        assert_eq!(format_p(0.125), "0.125");
        assert_eq!(format_p(0.00132), "0.001");
    }

    #[test]
    fn bootstrap_basics() {
        let ci = bootstrap_ci_mean(&[5.0, 5.0, 5.0], 200, 1).unwrap();
        assert_eq!((ci.mean, ci.lo, ci.hi), (5.0, 5.0, 5.0));
        let a = bootstrap_ci_mean(&[1.0, 9.0], 500, 3).unwrap();
        assert!(a.lo <= a.mean && a.mean <= a.hi);
        assert_eq!(a, bootstrap_ci_mean(&[1.0, 9.0], 500, 3).unwrap());
        assert!(bootstrap_ci_mean(&[], 10, 0).is_err());
    }

    #[test]
    fn curve_and_trim() {
        let ks = [Some(0.5), Some(2.0), None, Some(8.0)];
        let c = cumulative_curve_from(&ks, &[0.0, 1.0, 4.0, f64::INFINITY]);
        let rates: Vec<f64> = c.iter().map(|p| p.pass_rate).collect();
        assert_eq!(rates, vec![0.0, 0.25, 0.5, 0.75]);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(trimmed_mean_delta(&v, 0.1).unwrap(), 5.5);
        assert_eq!(trimmed_mean_delta(&[3.0; 7], 0.2).unwrap(), 3.0);
        assert_eq!(trimmed_mean_delta(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert_eq!(trimmed_mean_delta(&[1.0, 2.0], 0.5), Err(StatsError::AllTrimmed));
    }

    #[test]
    fn paired_counts() {
        let t = PairedTable::from_flags([(true, true), (false, true), (false, true), (true, false), (false, false)]);
        assert_eq!((t.n, t.only_a, t.only_b, t.both, t.neither), (5, 1, 2, 1, 1));
        assert!((t.diff_pp() - 20.0).abs() < 1e-12);
    }
}
