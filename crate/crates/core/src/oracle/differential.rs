//! Differential testing of a compiled translation against the compiled source.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::process::{self, Job, ProcessError};
use super::Toolchain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Match,
    Mismatch,
    Timeout,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub input_id: String,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub compiled: bool,
    pub tests_total: usize,
    pub tests_passed: usize,
    pub per_test: Vec<TestResult>,
}

impl FunctionalReport {
    pub fn not_compiled(tests_total: usize) -> Self {
        FunctionalReport {
            compiled: false,
            tests_total,
            tests_passed: 0,
            per_test: Vec::new(),
        }
    }

    pub fn pass_rate(&self) -> f64 {
        if self.tests_total == 0 {
            0.0
        } else {
            self.tests_passed as f64 / self.tests_total as f64
        }
    }
}

/// Trailing whitespace stripped from every line, exactly one final newline.
pub fn normalize_output(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(bytes);
    let mut out = String::with_capacity(text.len());
    for line in text.trim_end().lines() {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    if out.is_empty() {
        out.push('\n');
    }
    out.into_bytes()
}

enum Run {
    Output(Vec<u8>),
    Timeout,
    Crash,
}

fn execute(exe: &Path, input: &[u8], timeout: Duration) -> Run {
    let program = exe.to_string_lossy();
    match process::run(&Job {
        program: &program,
        args: &[],
        cwd: None,
        env: &[],
        stdin: Some(input),
        timeout,
    }) {
        Ok(out) if out.signalled() => Run::Crash,
        Ok(out) => Run::Output(out.stdout),
        Err(ProcessError::Timeout(_)) => Run::Timeout,
        Err(_) => Run::Crash,
    }
}

/// Feeds each input file to both executables and compares standard output.
/// `target = None` means the translation did not compile.
pub fn run_differential(
    target: Option<&Path>,
    reference: &Path,
    inputs: &[PathBuf],
    timeout: Duration,
) -> FunctionalReport {
    let Some(target) = target else {
        return FunctionalReport::not_compiled(inputs.len());
    };
    let mut per_test = Vec::with_capacity(inputs.len());
    for input in inputs {
        let input_id = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| input.to_string_lossy().into_owned());
        let bytes = fs::read(input).unwrap_or_default();
        let outcome = match execute(target, &bytes, timeout) {
            Run::Timeout => TestOutcome::Timeout,
            Run::Crash => TestOutcome::Crash,
            Run::Output(got) => match execute(reference, &bytes, timeout) {
                Run::Output(want) if normalize_output(&got) == normalize_output(&want) => TestOutcome::Match,
                _ => TestOutcome::Mismatch,
            },
        };
        per_test.push(TestResult { input_id, outcome });
    }
    FunctionalReport {
        compiled: true,
        tests_total: inputs.len(),
        tests_passed: per_test.iter().filter(|t| t.outcome == TestOutcome::Match).count(),
        per_test,
    }
}

fn compile(program: &str, args: Vec<String>, timeout: Duration) -> Result<(), String> {
    match process::run(&Job {
        program,
        args: &args,
        cwd: None,
        env: &[],
        stdin: None,
        timeout,
    }) {
        Ok(out) if out.status.success() => Ok(()),
        Ok(out) => Err(String::from_utf8_lossy(&out.stderr).into_owned()),
        Err(e) => Err(e.to_string()),
    }
}

pub fn compile_c(tools: &Toolchain, source: &Path, exe: &Path, timeout: Duration) -> Result<(), String> {
    let args = vec![
        "-O2".to_string(),
        "-w".to_string(),
        "-o".to_string(),
        exe.to_string_lossy().into_owned(),
        source.to_string_lossy().into_owned(),
        "-lm".to_string(),
    ];
    compile(&tools.cc, args, timeout)
}

pub fn compile_rust(tools: &Toolchain, source: &Path, exe: &Path, timeout: Duration) -> Result<(), String> {
    let args = vec![
        "--edition".to_string(),
        "2021".to_string(),
        "-O".to_string(),
        "--cap-lints".to_string(),
        "allow".to_string(),
        "-o".to_string(),
        exe.to_string_lossy().into_owned(),
        source.to_string_lossy().into_owned(),
    ];
    compile(&tools.rustc, args, timeout)
}

/// Compiles both programs in `workdir` and runs the differential comparison.
/// Fails only when the reference C program itself cannot be built.
pub fn differential_case(
    c_source: &str,
    rust_program: &str,
    inputs: &[PathBuf],
    workdir: &Path,
    tools: &Toolchain,
    timeout: Duration,
) -> Result<FunctionalReport, String> {
    fs::create_dir_all(workdir).map_err(|e| e.to_string())?;
    let c_path = workdir.join("reference.c");
    let rs_path = workdir.join("translation.rs");
    let c_exe = workdir.join("reference.bin");
    let rs_exe = workdir.join("translation.bin");
    fs::write(&c_path, c_source).map_err(|e| e.to_string())?;
    fs::write(&rs_path, rust_program).map_err(|e| e.to_string())?;
    let build = Duration::from_secs(120);
    compile_c(tools, &c_path, &c_exe, build).map_err(|e| format!("reference does not compile: {e}"))?;
    let target = compile_rust(tools, &rs_path, &rs_exe, build).ok().map(|_| rs_exe.as_path());
    Ok(run_differential(target, &c_exe, inputs, timeout))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_output(b"a  \nb\t\n\n\n"), b"a\nb\n");
        assert_eq!(normalize_output(b"a\nb"), b"a\nb\n");
        assert_eq!(normalize_output(b""), b"\n");
        assert_ne!(normalize_output(b" a\n"), normalize_output(b"a\n"));
    }

    #[test]
    fn not_compiled_short_circuits() {
        let r = run_differential(None, Path::new("/bin/true"), &[PathBuf::from("x")], Duration::from_secs(1));
        assert!(!r.compiled);
        assert_eq!((r.tests_passed, r.tests_total), (0, 1));
    }
}
