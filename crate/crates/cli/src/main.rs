use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dtv_core::backend::Backend;
use dtv_core::harness::{
    build_report, case_backend, execute_run, ingest_corpus, load_outcomes, replay_trace, write_report,
    BackendConfig, FixAnchor, FixShapeSpec, NamedRun, ReportSpec, RunConfig, RunOptions,
};
use dtv_core::scope::Task;
use dtv_core::selftest::{self, Scenario};
use dtv_core::stats::DEFAULT_RESAMPLES;
use dtv_core::strategy::Strategy;

#[derive(Parser)]
#[command(name = "dtv", version, about = "Verified decoding for code translation: runs, reports, replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the cases of a corpus directory as JSON lines.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        task: Task,
        /// Use this run config's remote backend to count tokens.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a strategy over a corpus.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Strategy id, e.g. `dtv/self-refine` or `sstar/n8r3`.
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        corpus: PathBuf,
        /// Case-level worker count.
        #[arg(long)]
        parallel: Option<usize>,
        /// Re-run cases that already have an outcome.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write CSV tables for one or more finished runs.
    Report {
        /// `NAME=DIR`, repeatable.
        #[arg(long = "run", value_parser = parse_named, required = true)]
        runs: Vec<(String, PathBuf)>,
        /// `A:B` by run name, repeatable.
        #[arg(long = "compare", value_parser = parse_pair)]
        comparisons: Vec<(String, String)>,
        /// `NAIVE:DTV` by run name.
        #[arg(long, value_parser = parse_pair)]
        fixshape: Option<(String, String)>,
        #[arg(long, value_enum, default_value_t = Anchor::R2)]
        anchor: Anchor,
        #[arg(long, default_value = "c-to-rust")]
        task: Task,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rebuild programs from trace files and check trace invariants.
    Replay {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Run the scripted controller scenarios.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Anchor {
    R2,
    Final,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    let (name, dir) = s.split_once('=').ok_or("expected NAME=DIR")?;
    Ok((name.to_string(), PathBuf::from(dir)))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    Ok((a.to_string(), b.to_string()))
}

fn tokenizer(config: Option<&Path>) -> Result<Option<Box<dyn Backend>>> {
    let Some(path) = config else { return Ok(None) };
    let c = RunConfig::load(path)?.with_env_overrides();
    Ok(match &c.backend {
        BackendConfig::Remote(_) => Some(case_backend(&c.backend, "")),
        BackendConfig::Scripted { .. } => None,
    })
}

fn ingest(corpus: &Path, task: Task, config: Option<&Path>) -> Result<()> {
    let tok = tokenizer(config)?;
    for m in ingest_corpus(corpus, task, tok.as_deref())? {
        println!("{}", serde_json::to_string(&m)?);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: &Path,
    strategy: Option<Strategy>,
    corpus: &Path,
    parallel: Option<usize>,
    force: bool,
    output: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?.with_env_overrides();
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(o) = output {
        cfg.output = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if parallel.is_some() {
        cfg.workers = parallel;
    }
    let tok = match &cfg.backend {
        BackendConfig::Remote(_) => Some(case_backend(&cfg.backend, "")),
        BackendConfig::Scripted { .. } => None,
    };
    let cases = ingest_corpus(corpus, cfg.task, tok.as_deref())?;
    let opts = RunOptions {
        force,
        ..RunOptions::default()
    };
    let s = execute_run(&cfg, &cases, &opts)?;
    let tokens: usize = s.outcomes.iter().map(|o| o.tokens_total).sum();
    println!(
        "{}: {} cases, {} run, {} skipped, {} passed, {} infra failures, {} tokens -> {}",
        cfg.strategy,
        s.cases,
        s.executed,
        s.skipped,
        s.passed,
        s.infra_failures,
        tokens,
        cfg.output.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn report(
    runs: Vec<(String, PathBuf)>,
    comparisons: Vec<(String, String)>,
    fixshape: Option<(String, String)>,
    anchor: Anchor,
    task: Task,
    out: &Path,
    resamples: usize,
    seed: u64,
) -> Result<()> {
    let mut named = Vec::new();
    for (name, dir) in runs {
        let outcomes = load_outcomes(&dir).with_context(|| format!("run `{name}`"))?;
        named.push(NamedRun { name, outcomes });
    }
    let mut spec = ReportSpec::new(named);
    spec.comparisons = comparisons;
    spec.fixshape = fixshape.map(|(naive, dtv)| FixShapeSpec {
        naive,
        dtv,
        anchor: match anchor {
            Anchor::R2 => FixAnchor::R2,
            Anchor::Final => FixAnchor::RFinal,
        },
        task,
    });
    spec.resamples = resamples;
    spec.seed = seed;
    let r = build_report(&spec)?;
    for m in &r.marginal {
        let tpp = match (m.tokens_per_pass, m.ci_lo, m.ci_hi) {
            (Some(t), Some(lo), Some(hi)) => format!("{t:.0} [{lo:.0}, {hi:.0}]"),
            _ => "-".into(),
        };
        println!(
            "{:<24} {:>4}/{:<4} {:>6.1}%  avg k {:>5.2}  tokens/pass {}",
            m.run,
            m.passed,
            m.n,
            m.pass_rate * 100.0,
            m.avg_k,
            tpp
        );
    }
    for p in &r.paired {
        println!(
            "{} vs {}: only_a {} only_b {} diff {:+.1}pp p {}",
            p.a, p.b, p.only_a, p.only_b, p.diff_pp, p.p_display
        );
    }
    for path in write_report(&r, out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn replay(traces: &[PathBuf]) -> Result<bool> {
    let mut clean = true;
    for path in traces {
        match replay_trace(path) {
            Ok(r) => println!(
                "ok   {} case={} rounds={} meta_steps={} rollbacks={} tokens={} program_bytes={}",
                path.display(),
                r.case_id,
                r.rounds,
                r.meta_steps,
                r.rollbacks,
                r.tokens_total,
                r.program.len()
            ),
            Err(e) => {
                clean = false;
                println!("FAIL {}: {e}", path.display());
            }
        }
    }
    Ok(clean)
}

fn selftest() -> Result<bool> {
    let dir = std::env::temp_dir().join(format!("dtv-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut ok = true;
    for s in Scenario::ALL {
        match selftest::check(s, &dir) {
            Ok(()) => println!("PASS {}", s.name()),
            Err(e) => {
                ok = false;
                println!("FAIL {}: {e}", s.name());
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { corpus, task, config } => ingest(&corpus, task, config.as_deref()).map(|_| true),
        Command::Run {
            config,
            strategy,
            corpus,
            parallel,
            force,
            output,
            seed,
        } => run(&config, strategy, &corpus, parallel, force, output, seed).map(|_| true),
        Command::Report {
            runs,
            comparisons,
            fixshape,
            anchor,
            task,
            out,
            resamples,
            seed,
        } => report(runs, comparisons, fixshape, anchor, task, &out, resamples, seed).map(|_| true),
        Command::Replay { traces } => replay(&traces),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::debug!("{e:?}");
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
