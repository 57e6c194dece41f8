//! Subprocess execution with a wall-clock timeout.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use wait_timeout::ChildExt;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("tool not found: {0}")]
    Missing(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("i/o error running {program}: {source}")]
    Io {
        program: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub status: ExitStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub elapsed: Duration,
}

impl Captured {
    /// Terminated by a signal (Unix) rather than exiting.
    pub fn signalled(&self) -> bool {
        #[cfg(unix)]
        {
            use std::os::unix::process::ExitStatusExt;
            self.status.signal().is_some()
        }
        #[cfg(not(unix))]
        {
            false
        }
    }
}

pub struct Job<'a> {
    pub program: &'a str,
    pub args: &'a [String],
    pub cwd: Option<&'a Path>,
    pub env: &'a [(String, String)],
    pub stdin: Option<&'a [u8]>,
    pub timeout: Duration,
}

pub fn run(job: &Job<'_>) -> Result<Captured, ProcessError> {
    let mut cmd = Command::new(job.program);
    cmd.args(job.args)
        .stdin(if job.stdin.is_some() {
            Stdio::piped()
        } else {
            Stdio::null()
        })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(dir) = job.cwd {
        cmd.current_dir(dir);
    }
    for (k, v) in job.env {
        cmd.env(k, v);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ProcessError::Missing(job.program.to_string()),
        _ => ProcessError::Io {
            program: job.program.to_string(),
            source: e,
        },
    })?;

    let feeder = job.stdin.map(|bytes| {
        let mut pipe = child.stdin.take().expect("stdin was piped");
        let bytes = bytes.to_vec();
        thread::spawn(move || {
            // A child that exits without reading stdin closes the pipe early.
            let _ = pipe.write_all(&bytes);
        })
    });
    let mut out_pipe = child.stdout.take().expect("stdout was piped");
    let mut err_pipe = child.stderr.take().expect("stderr was piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let io_err = |source| ProcessError::Io {
        program: job.program.to_string(),
        source,
    };
    let status = match child.wait_timeout(job.timeout).map_err(io_err)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ProcessError::Timeout(job.timeout));
        }
    };
    if let Some(f) = feeder {
        let _ = f.join();
    }
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(Captured {
        status,
        stdout,
        stderr,
        elapsed: start.elapsed(),
    })
}

/// True if `program` can be spawned (either a path that exists or a name on `PATH`).
pub fn tool_available(program: &str) -> bool {
    let p = Path::new(program);
    if p.components().count() > 1 {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn job<'a>(program: &'a str, args: &'a [String], stdin: Option<&'a [u8]>, secs: u64) -> Job<'a> {
        Job {
            program,
            args,
            cwd: None,
            env: &[],
            stdin,
            timeout: Duration::from_secs(secs),
        }
    }

    #[test]
    fn captures_stdout_from_stdin() {
        let out = run(&job("cat", &[], Some(b"hello\n"), 5)).unwrap();
        assert_eq!(out.stdout, b"hello\n");
        assert!(out.status.success());
    }

    #[test]
    fn missing_tool() {
        let e = run(&job("dtv-no-such-tool", &[], None, 5)).unwrap_err();
        assert!(matches!(e, ProcessError::Missing(_)));
        assert!(!tool_available("dtv-no-such-tool"));
        assert!(tool_available("sh"));
    }

    #[test]
    fn timeout_kills() {
        let args = vec!["-c".to_string(), "sleep 5".to_string()];
        let e = run(&Job {
            timeout: Duration::from_millis(100),
            ..job("sh", &args, None, 0)
        })
        .unwrap_err();
        assert!(matches!(e, ProcessError::Timeout(_)));
    }
}
