//! Client side of the test-executor protocol.
//!
//! The executor is a separate program that reads one [`ExecJob`] as JSON on
//! stdin and writes one [`ExecResult`] as JSON on stdout. [`ProcessRunner`]
//! drives such a program; [`FnRunner`] and [`ReferenceRunner`] stand in for
//! it in-process.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Wire protocol version carried by jobs and results.
pub const PROTOCOL_VERSION: u32 = 1;
/// Characters of stderr kept in a result.
pub const STDERR_TAIL_CHARS: usize = 2000;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("cannot start executor `{program}`: {detail}")]
    Spawn { program: String, detail: String },
    #[error("executor protocol error: {0}")]
    Protocol(String),
    #[error("executor failed internally (exit {code:?}): {stderr}")]
    Internal { code: Option<i32>, stderr: String },
}

pub type Result<T, E = RunnerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecJob {
    pub version: u32,
    pub solution_code: String,
    pub test_code: String,
    pub entry_point: String,
    pub timeout_s: f64,
    pub memory_mb: u32,
}

impl ExecJob {
    pub fn new(
        solution_code: impl Into<String>,
        test_code: impl Into<String>,
        entry_point: impl Into<String>,
    ) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            solution_code: solution_code.into(),
            test_code: test_code.into(),
            entry_point: entry_point.into(),
            timeout_s: 10.0,
            memory_mb: 1024,
        }
    }

    pub fn timeout(mut self, timeout_s: f64) -> Self {
        self.timeout_s = timeout_s;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    Pass,
    Fail,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    #[serde(default = "protocol_version")]
    pub version: u32,
    pub status: ExecStatus,
    #[serde(default)]
    pub stderr_tail: String,
    #[serde(default)]
    pub wall_time_s: f64,
}

fn protocol_version() -> u32 {
    PROTOCOL_VERSION
}

impl ExecResult {
    pub fn new(status: ExecStatus, stderr: &str, wall_time_s: f64) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            status,
            stderr_tail: tail(stderr, STDERR_TAIL_CHARS),
            wall_time_s,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == ExecStatus::Pass
    }
}

fn tail(text: &str, max_chars: usize) -> String {
    let count = text.chars().count();
    text.chars().skip(count.saturating_sub(max_chars)).collect()
}

/// Executes one job. Candidate misbehavior is a result, not an error.
pub trait Runner: Send + Sync {
    fn run(&self, job: &ExecJob) -> Result<ExecResult>;
}

impl<T: Runner + ?Sized> Runner for &T {
    fn run(&self, job: &ExecJob) -> Result<ExecResult> {
        (**self).run(job)
    }
}

impl<T: Runner + ?Sized> Runner for Box<T> {
    fn run(&self, job: &ExecJob) -> Result<ExecResult> {
        (**self).run(job)
    }
}

/// Runs an external executor once per job.
///
/// The executor is expected to enforce `timeout_s` itself; this side kills it
/// after `timeout_s + grace_s` and reports a timeout.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    program: String,
    args: Vec<String>,
    grace_s: f64,
}

impl ProcessRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            grace_s: 5.0,
        }
    }

    /// Splits a command line on whitespace.
    pub fn parse(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts.next().ok_or_else(|| RunnerError::Spawn {
            program: String::new(),
            detail: "empty command".into(),
        })?;
        Ok(Self::new(program, parts.collect()))
    }

    pub fn grace(mut self, grace_s: f64) -> Self {
        self.grace_s = grace_s;
        self
    }

    fn spawn(&self) -> Result<Child> {
        Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| RunnerError::Spawn {
                program: self.program.clone(),
                detail: e.to_string(),
            })
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl Runner for ProcessRunner {
    fn run(&self, job: &ExecJob) -> Result<ExecResult> {
        let payload = serde_json::to_vec(job).map_err(|e| RunnerError::Protocol(e.to_string()))?;
        let start = Instant::now();
        let mut child = self.spawn()?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));
        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());

        let deadline = Duration::from_secs_f64(job.timeout_s.max(0.0) + self.grace_s);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => {
                    return Err(RunnerError::Protocol(format!("waiting for executor: {e}")));
                }
            }
        };
        let _ = writer.join();
        let out = stdout.join().unwrap_or_default();
        let err = stderr.join().unwrap_or_default();
        let elapsed = start.elapsed().as_secs_f64();

        let Some(status) = status else {
            return Ok(ExecResult::new(ExecStatus::Timeout, &err, elapsed));
        };
        if !status.success() {
            return Err(RunnerError::Internal {
                code: status.code(),
                stderr: tail(&err, STDERR_TAIL_CHARS),
            });
        }
        let result: ExecResult = serde_json::from_str(out.trim()).map_err(|e| {
            RunnerError::Protocol(format!("bad result `{}`: {e}", tail(out.trim(), 200)))
        })?;
        if result.version != PROTOCOL_VERSION {
            return Err(RunnerError::Protocol(format!(
                "result version {} (expected {PROTOCOL_VERSION})",
                result.version
            )));
        }
        Ok(result)
    }
}

/// Decides with a closure.
pub struct FnRunner<F> {
    judge: F,
}

impl<F> FnRunner<F>
where
    F: Fn(&ExecJob) -> ExecStatus + Send + Sync,
{
    pub fn new(judge: F) -> Self {
        Self { judge }
    }
}

impl<F> Runner for FnRunner<F>
where
    F: Fn(&ExecJob) -> ExecStatus + Send + Sync,
{
    fn run(&self, job: &ExecJob) -> Result<ExecResult> {
        Ok(ExecResult::new((self.judge)(job), "", 0.0))
    }
}

/// Passes a job when its solution matches the known reference solution for
/// that test program, ignoring trailing whitespace on lines. Needs no
/// interpreter, which keeps evaluation tests hermetic.
#[derive(Debug, Clone, Default)]
pub struct ReferenceRunner {
    references: HashMap<String, String>,
}

fn normalize(code: &str) -> String {
    code.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

impl ReferenceRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, test_code: &str, reference_solution: &str) {
        self.references
            .insert(test_code.to_owned(), normalize(reference_solution));
    }
}

impl Runner for ReferenceRunner {
    fn run(&self, job: &ExecJob) -> Result<ExecResult> {
        let Some(reference) = self.references.get(&job.test_code) else {
            return Ok(ExecResult::new(
                ExecStatus::Error,
                "no reference for this test program",
                0.0,
            ));
        };
        let status = if normalize(&job.solution_code) == *reference {
            ExecStatus::Pass
        } else {
            ExecStatus::Fail
        };
        Ok(ExecResult::new(status, "", 0.0))
    }
}
