//! Report tables over one or more finished runs.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::scope::Task;
use crate::stats::{
    by_id, check_ids, classify_fix_shape, cumulative_curve, format_p, marginal, per_code_rescue, percentile,
    shared_code_ratio, sign_test_exact, trimmed_mean_delta, CodeRescue, LineSets, PairedTable, ShapeLabel,
    StatsError,
};
use crate::strategy::{CaseOutcome, Emission};

pub const DEFAULT_K_GRID: &[f64] = &[0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, f64::INFINITY];
pub const DEFAULT_TRIM: f64 = 0.1;
pub const MIN_CODE_CASES: usize = 5;
/// Fix-shape bins below this size are flagged as underpowered.
pub const UNDERPOWERED: usize = 5;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{a} vs {b}: {source}")]
    Ids {
        a: String,
        b: String,
        #[source]
        source: StatsError,
    },
    #[error("no run named `{0}`")]
    UnknownRun(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    pub outcomes: Vec<CaseOutcome>,
}

/// Which naive round stands in for the repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixAnchor {
    /// The second round.
    #[default]
    R2,
    /// The round that finally passed; cases the naive run never passes are
    /// left out.
    RFinal,
}

#[derive(Debug, Clone)]
pub struct FixShapeSpec {
    pub naive: String,
    pub dtv: String,
    pub anchor: FixAnchor,
    pub task: Task,
}

#[derive(Debug, Clone)]
pub struct ReportSpec {
    pub runs: Vec<NamedRun>,
    /// Pairs of run names, A then B.
    pub comparisons: Vec<(String, String)>,
    pub fixshape: Option<FixShapeSpec>,
    pub resamples: usize,
    pub seed: u64,
    pub k_grid: Vec<f64>,
    pub trim: f64,
}

impl ReportSpec {
    pub fn new(runs: Vec<NamedRun>) -> Self {
        ReportSpec {
            runs,
            comparisons: Vec::new(),
            fixshape: None,
            resamples: crate::stats::DEFAULT_RESAMPLES,
            seed: 0,
            k_grid: DEFAULT_K_GRID.to_vec(),
            trim: DEFAULT_TRIM,
        }
    }

    fn run(&self, name: &str) -> Result<&NamedRun, ReportError> {
        self.runs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| ReportError::UnknownRun(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalRow {
    pub run: String,
    pub strategy: String,
    pub n: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub avg_tokens: f64,
    pub avg_k: f64,
    pub tokens_per_pass: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub infra_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub both: usize,
    pub only_a: usize,
    pub only_b: usize,
    pub neither: usize,
    pub diff_pp: f64,
    pub p: f64,
    pub p_display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub run: String,
    pub k: f64,
    pub pass_rate: f64,
}

/// Token and round differences on cases both runs pass; deltas are B minus A.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BothPassRow {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub b_fewer_tokens: usize,
    pub equal_tokens: usize,
    pub b_more_tokens: usize,
    pub median_delta: Option<f64>,
    pub mean_delta: Option<f64>,
    pub trimmed_mean_delta: Option<f64>,
    pub b_fewer_rounds: usize,
    pub b_more_rounds: usize,
    pub median_round_ratio: Option<f64>,
    pub rounds_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixShapeRow {
    pub case_id: String,
    pub label: String,
    pub n_r1: usize,
    pub error_lines: String,
    pub changed_lines: String,
    pub rescued: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixShapeSummaryRow {
    pub label: String,
    pub cases: usize,
    pub rescued: usize,
    pub rate: Option<f64>,
    pub underpowered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedRatioRow {
    pub case_id: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub marginal: Vec<MarginalRow>,
    pub paired: Vec<PairedRow>,
    pub curve: Vec<CurveRow>,
    pub both_pass: Vec<BothPassRow>,
    pub fixshape: Vec<FixShapeRow>,
    pub fixshape_summary: Vec<FixShapeSummaryRow>,
    pub per_code: Vec<CodeRescue>,
    pub shared_ratio: Vec<SharedRatioRow>,
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile(&v, 0.5))
}

fn join_lines(lines: &BTreeSet<usize>) -> String {
    lines.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn paired(spec: &ReportSpec, a: &NamedRun, b: &NamedRun) -> Result<(PairedRow, BothPassRow), ReportError> {
    let table = PairedTable::from_outcomes(&a.outcomes, &b.outcomes).map_err(|source| ReportError::Ids {
        a: a.name.clone(),
        b: b.name.clone(),
        source,
    })?;
    let (ma, mb) = (by_id(&a.outcomes), by_id(&b.outcomes));
    let mut deltas = Vec::new();
    let mut ratios = Vec::new();
    let (mut fewer, mut equal, mut more) = (0, 0, 0);
    let (mut r_fewer, mut r_more) = (0, 0);
    for (id, x) in &ma {
        let y = mb[id];
        if !(x.passed && y.passed) {
            continue;
        }
        let d = y.tokens_total as f64 - x.tokens_total as f64;
        match d.total_cmp(&0.0) {
            std::cmp::Ordering::Less => fewer += 1,
            std::cmp::Ordering::Equal => equal += 1,
            std::cmp::Ordering::Greater => more += 1,
        }
        deltas.push(d);
        let (ra, rb) = (x.pass_round.unwrap_or(x.rounds), y.pass_round.unwrap_or(y.rounds));
        ratios.push(ra as f64 / rb.max(1) as f64);
        match rb.cmp(&ra) {
            std::cmp::Ordering::Less => r_fewer += 1,
            std::cmp::Ordering::Greater => r_more += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let p = table.p_value();
    let row = PairedRow {
        a: a.name.clone(),
        b: b.name.clone(),
        n: table.n,
        both: table.both,
        only_a: table.only_a,
        only_b: table.only_b,
        neither: table.neither,
        diff_pp: table.diff_pp(),
        p,
        p_display: format_p(p),
    };
    let both = BothPassRow {
        a: a.name.clone(),
        b: b.name.clone(),
        n: deltas.len(),
        b_fewer_tokens: fewer,
        equal_tokens: equal,
        b_more_tokens: more,
        median_delta: median(&deltas),
        mean_delta: crate::stats::mean(&deltas),
        trimmed_mean_delta: trimmed_mean_delta(&deltas, spec.trim).ok(),
        b_fewer_rounds: r_fewer,
        b_more_rounds: r_more,
        median_round_ratio: median(&ratios),
        rounds_p: sign_test_exact(r_fewer, r_more),
    };
    Ok((row, both))
}

struct FixShapeTables {
    cases: Vec<FixShapeRow>,
    summary: Vec<FixShapeSummaryRow>,
    per_code: Vec<CodeRescue>,
    shared: Vec<SharedRatioRow>,
}

fn fixshape(fs: &FixShapeSpec, naive: &NamedRun, dtv: &NamedRun) -> Result<FixShapeTables, ReportError> {
    let (mn, md) = (by_id(&naive.outcomes), by_id(&dtv.outcomes));
    check_ids(&mn, &md).map_err(|source| ReportError::Ids {
        a: naive.name.clone(),
        b: dtv.name.clone(),
        source,
    })?;
    let mut cases = Vec::new();
    let mut code_sets = Vec::new();
    let mut shared = Vec::new();
    for (id, n) in &mn {
        let Some(r1) = n.history.first().filter(|r| !r.passed) else {
            continue;
        };
        let d = md[id];
        let rescued = d.passed;
        code_sets.push((r1.codes().map(str::to_string).collect::<Vec<_>>(), rescued));

        if rescued {
            let inner: Vec<&_> = d.history.iter().filter_map(|r| r.inner.as_ref()).collect();
            if inner.iter().any(|i| i.rollbacks > 0) {
                let emitted: Vec<Emission> = inner.iter().flat_map(|i| i.emissions.iter().cloned()).collect();
                if let Some(ratio) = shared_code_ratio(&emitted, &r1.emissions) {
                    shared.push(SharedRatioRow {
                        case_id: id.to_string(),
                        ratio,
                    });
                }
            }
        }

        let repair = match fs.anchor {
            FixAnchor::R2 => n.history.get(1),
            FixAnchor::RFinal => match n.history.iter().position(|r| r.passed) {
                Some(i) => n.history.get(i),
                None => continue,
            },
        };
        let sets = match repair {
            Some(r2) => LineSets::from_rounds(&r1.program, &r1.diagnostic_text, &r2.program, fs.task),
            None => LineSets::default(),
        };
        let shape = classify_fix_shape(&sets);
        cases.push(FixShapeRow {
            case_id: id.to_string(),
            label: shape.name(),
            n_r1: sets.n_r1,
            error_lines: join_lines(&sets.error_lines),
            changed_lines: join_lines(&sets.changed_lines),
            rescued,
        });
    }
    let mut summary = Vec::new();
    let labels = [ShapeLabel::Local, ShapeLabel::Mixed, ShapeLabel::Nonlocal, ShapeLabel::Unknown];
    for label in labels {
        let name = format!("{label:?}").to_uppercase();
        let rows: Vec<&FixShapeRow> = cases.iter().filter(|r| r.label.starts_with(&name)).collect();
        let rescued = rows.iter().filter(|r| r.rescued).count();
        summary.push(FixShapeSummaryRow {
            label: name,
            cases: rows.len(),
            rescued,
            rate: (!rows.is_empty()).then(|| rescued as f64 / rows.len() as f64),
            underpowered: rows.len() < UNDERPOWERED,
        });
    }
    Ok(FixShapeTables {
        cases,
        summary,
        per_code: per_code_rescue(&code_sets, MIN_CODE_CASES),
        shared,
    })
}

pub fn build_report(spec: &ReportSpec) -> Result<Report, ReportError> {
    let mut report = Report::default();
    for run in &spec.runs {
        let m = marginal(&run.outcomes, spec.resamples, spec.seed);
        report.marginal.push(MarginalRow {
            run: run.name.clone(),
            strategy: run.outcomes.first().map(|o| o.strategy.clone()).unwrap_or_default(),
            n: m.n,
            passed: m.passed,
            pass_rate: m.pass_rate,
            avg_tokens: m.avg_tokens,
            avg_k: m.avg_k,
            tokens_per_pass: m.tokens_per_pass.map(|i| i.mean),
            ci_lo: m.tokens_per_pass.map(|i| i.lo),
            ci_hi: m.tokens_per_pass.map(|i| i.hi),
            infra_failures: run.outcomes.iter().filter(|o| o.is_infra_failure()).count(),
        });
        for p in cumulative_curve(&run.outcomes, &spec.k_grid) {
            report.curve.push(CurveRow {
                run: run.name.clone(),
                k: p.k,
                pass_rate: p.pass_rate,
            });
        }
    }
    for (a, b) in &spec.comparisons {
        let (row, both) = paired(spec, spec.run(a)?, spec.run(b)?)?;
        report.paired.push(row);
        report.both_pass.push(both);
    }
    if let Some(fs) = &spec.fixshape {
        let t = fixshape(fs, spec.run(&fs.naive)?, spec.run(&fs.dtv)?)?;
        report.fixshape = t.cases;
        report.fixshape_summary = t.summary;
        report.per_code = t.per_code;
        report.shared_ratio = t.shared;
    }
    Ok(report)
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    let csv_err = |source| ReportError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes every non-empty table as a CSV file and returns the paths written.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = vec![write_csv(dir, "marginal.csv", &report.marginal)?];
    out.push(write_csv(dir, "curve.csv", &report.curve)?);
    if !report.paired.is_empty() {
        out.push(write_csv(dir, "paired.csv", &report.paired)?);
        out.push(write_csv(dir, "both_pass.csv", &report.both_pass)?);
    }
    if !report.fixshape_summary.is_empty() {
        out.push(write_csv(dir, "fixshape_cases.csv", &report.fixshape)?);
        out.push(write_csv(dir, "fixshape.csv", &report.fixshape_summary)?);
        out.push(write_csv(dir, "per_code_rescue.csv", &report.per_code)?);
        out.push(write_csv(dir, "shared_code_ratio.csv", &report.shared_ratio)?);
    }
    Ok(out)
}
