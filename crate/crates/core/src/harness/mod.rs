//! Corpus ingestion, run orchestration, traces, replay and reports.

pub mod config;
pub mod manifest;
pub mod replay;
pub mod report;
pub mod run;
pub mod trace;

pub use config::{case_backend, BackendConfig, ConfigError, InnerSettings, RunConfig};
pub use manifest::{ingest_corpus, CaseManifest, IngestError};
pub use replay::{replay, parse_and_replay, replay_trace, InvariantViolation, ReplayError, ReplayReport, Violation};
pub use report::{build_report, write_report, FixAnchor, FixShapeSpec, NamedRun, Report, ReportError, ReportSpec};
pub use run::{execute_run, load_outcomes, RunError, RunLayout, RunOptions, RunSummary};
pub use trace::{read_trace, write_trace, Trace, TraceError, TraceEvent, TraceHeader};
