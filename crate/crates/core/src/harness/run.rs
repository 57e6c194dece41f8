//! Executes a configured strategy over a corpus and persists the results.

use std::fs;
use std::io::{self, BufRead, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use super::config::{case_backend, ConfigError, RunConfig};
use super::manifest::CaseManifest;
use super::trace::{write_trace, TraceHeader};
use crate::oracle::differential_case;
use crate::par::{self, Parallelism};
use crate::scope::Task;
use crate::strategy::{run_strategy, CaseInput, CaseOutcome, OutcomeKind, StrategyEnv};

pub const FUNCTIONAL_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}:{line}: {message}")]
    Outcome { path: PathBuf, line: usize, message: String },
    #[error("case {case_id} is {found}, run expects {expected}")]
    TaskMismatch { case_id: String, expected: Task, found: Task },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Re-run cases whose outcome already exists.
    pub force: bool,
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
    /// Written to `config.toml` as given; the serialised config otherwise.
    pub config_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cases: usize,
    pub executed: usize,
    pub skipped: usize,
    pub infra_failures: usize,
    pub passed: usize,
    /// Every case of the run in id order, including skipped ones.
    pub outcomes: Vec<CaseOutcome>,
}

pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        RunLayout { root: root.to_path_buf() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn outcome(&self, case_id: &str) -> PathBuf {
        self.root.join("outcomes").join(format!("{case_id}.json"))
    }

    pub fn trace(&self, case_id: &str) -> PathBuf {
        self.root.join("traces").join(format!("{case_id}.jsonl"))
    }

    pub fn workdir(&self, case_id: &str) -> PathBuf {
        self.root.join("work").join(case_id)
    }

    pub fn combined(&self) -> PathBuf {
        self.root.join("outcomes.jsonl")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn harness_failure(config: &RunConfig, case: &CaseManifest, message: String) -> CaseOutcome {
    CaseOutcome {
        case_id: case.case_id.clone(),
        strategy: config.strategy.to_string(),
        kind: OutcomeKind::InfraFailure,
        infra_error: Some(message),
        passed: false,
        pass_round: None,
        tokens_total: 0,
        tokens_at_first_pass: None,
        rounds: 0,
        source_tokens: case.source_tokens,
        budget: config.strategy_config().budget(case.source_tokens),
        program: String::new(),
        history: Vec::new(),
        functional: None,
    }
}

fn run_case(config: &RunConfig, layout: &RunLayout, case: &CaseManifest) -> Result<CaseOutcome, RunError> {
    let source = match case.read_source() {
        Ok(s) => s,
        Err(e) => return Ok(harness_failure(config, case, format!("source: {e}"))),
    };
    let workdir = layout.workdir(&case.case_id);
    fs::create_dir_all(&workdir).map_err(io_err(&workdir))?;
    let backend = case_backend(&config.backend, &case.case_id);
    let inloop = config.inloop_suite();
    let outer = config.outer_suite();
    let inner = config.inner_config();
    let sc = config.strategy_config();
    let input = CaseInput {
        id: &case.case_id,
        task: config.task,
        source: &source,
        source_tokens: case.source_tokens,
    };
    let env = StrategyEnv {
        backend: backend.as_ref(),
        inloop: &inloop,
        outer: &outer,
        tools: &config.tools,
        workdir: &workdir,
        base_seed: config.seed,
        inner: &inner,
        parallelism: Parallelism::Parallel,
    };
    let run = catch_unwind(AssertUnwindSafe(|| run_strategy(input, env, sc)));
    let (mut outcome, events) = match run {
        Ok(r) => (r.outcome, r.events),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (harness_failure(config, case, format!("panic: {msg}")), Vec::new())
        }
    };
    if config.functional && config.task == Task::CToRust && outcome.passed {
        match differential_case(
            &source,
            &outcome.program,
            &case.inputs,
            &workdir.join("functional"),
            &config.tools,
            FUNCTIONAL_TIMEOUT,
        ) {
            Ok(r) => outcome.functional = Some(r),
            Err(e) => log::warn!("{}: functional check skipped: {e}", case.case_id),
        }
    }
    let header = TraceHeader::new(&case.case_id, &outcome.strategy, outcome.budget, sc.per_round_cap);
    let trace = layout.trace(&case.case_id);
    write_trace(&trace, &header, &events).map_err(io_err(&trace))?;
    let path = layout.outcome(&case.case_id);
    let json = serde_json::to_vec_pretty(&outcome).expect("outcome serialises");
    write_atomic(&path, &json).map_err(io_err(&path))?;
    Ok(outcome)
}

fn read_outcome(path: &Path) -> Result<CaseOutcome, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Outcome {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Runs every case not already finished under `config.output`, then rewrites
/// the combined `outcomes.jsonl` in case order.
pub fn execute_run(config: &RunConfig, cases: &[CaseManifest], opts: &RunOptions) -> Result<RunSummary, RunError> {
    if let Some(c) = cases.iter().find(|c| c.task != config.task) {
        return Err(RunError::TaskMismatch {
            case_id: c.case_id.clone(),
            expected: config.task,
            found: c.task,
        });
    }
    let layout = RunLayout::new(&config.output);
    for dir in [layout.root.clone(), layout.root.join("outcomes"), layout.root.join("traces")] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let text = match &opts.config_text {
        Some(t) => t.clone(),
        None => config.to_toml()?,
    };
    let cfg_path = layout.config();
    write_atomic(&cfg_path, text.as_bytes()).map_err(io_err(&cfg_path))?;

    let mut sorted: Vec<&CaseManifest> = cases.iter().collect();
    sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let pending: Vec<&CaseManifest> = sorted
        .iter()
        .copied()
        .filter(|c| opts.force || !layout.outcome(&c.case_id).is_file())
        .collect();
    log::info!("{} cases, {} to run", sorted.len(), pending.len());
    let workers = opts.workers.or(config.workers);
    let results = par::with_workers(workers, || {
        par::map_slice(Parallelism::Parallel, &pending, |c| {
            let r = run_case(config, &layout, c);
            if let Ok(o) = &r {
                log::info!("{}: passed={} tokens={}", o.case_id, o.passed, o.tokens_total);
            }
            r
        })
    });
    for r in results {
        r?;
    }

    let mut outcomes = Vec::with_capacity(sorted.len());
    for c in &sorted {
        outcomes.push(read_outcome(&layout.outcome(&c.case_id))?);
    }
    let mut combined = Vec::new();
    for o in &outcomes {
        serde_json::to_writer(&mut combined, o).expect("outcome serialises");
        combined.push(b'\n');
    }
    let path = layout.combined();
    write_atomic(&path, &combined).map_err(io_err(&path))?;

    Ok(RunSummary {
        cases: sorted.len(),
        executed: pending.len(),
        skipped: sorted.len() - pending.len(),
        infra_failures: outcomes.iter().filter(|o| o.is_infra_failure()).count(),
        passed: outcomes.iter().filter(|o| o.passed).count(),
        outcomes,
    })
}

/// Reads `outcomes.jsonl` from a run directory, or the file itself.
pub fn load_outcomes(path: &Path) -> Result<Vec<CaseOutcome>, RunError> {
    let file = if path.is_dir() {
        RunLayout::new(path).combined()
    } else {
        path.to_path_buf()
    };
    let f = fs::File::open(&file).map_err(io_err(&file))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(&file))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Outcome {
            path: file.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
