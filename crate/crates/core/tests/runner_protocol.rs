//! ProcessRunner against small stand-in executors written to a temp dir.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use assistkit::runner::{ExecJob, ExecStatus, ProcessRunner, Runner, RunnerError};

const EXECUTOR: &str = r#"
import json, subprocess, sys, time
job = json.load(sys.stdin)
program = job["solution_code"] + "\n" + job["test_code"]
start = time.time()
try:
    proc = subprocess.run([sys.executable, "-c", program], capture_output=True, text=True, timeout=job["timeout_s"])
    status, err = ("pass" if proc.returncode == 0 else "fail"), proc.stderr
except subprocess.TimeoutExpired:
    status, err = "timeout", ""
print(json.dumps({"version": 1, "status": status, "stderr_tail": err[-2000:], "wall_time_s": time.time() - start}))
"#;

fn python() -> Option<&'static str> {
    Command::new("python3")
        .arg("--version")
        .output()
        .ok()
        .map(|_| "python3")
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn runner(path: &Path) -> ProcessRunner {
    ProcessRunner::new(python().unwrap(), vec![path.display().to_string()])
}

#[test]
fn pass_fail_and_timeout() {
    if python().is_none() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exec = runner(&script(dir.path(), "exec.py", EXECUTOR));

    let good = ExecJob::new(
        "def add(a, b):\n    return a + b\n",
        "assert add(1, 2) == 3\n",
        "add",
    );
    let result = exec.run(&good).unwrap();
    assert_eq!(result.status, ExecStatus::Pass);

    let bad = ExecJob::new(
        "def add(a, b):\n    return a - b\n",
        "assert add(1, 2) == 3\n",
        "add",
    );
    let result = exec.run(&bad).unwrap();
    assert_eq!(result.status, ExecStatus::Fail);
    assert!(result.stderr_tail.contains("AssertionError"));

    let start = Instant::now();
    let spin = ExecJob::new("while True:\n    pass\n", "", "f").timeout(1.0);
    assert_eq!(exec.run(&spin).unwrap().status, ExecStatus::Timeout);
    assert!(start.elapsed().as_secs_f64() < 1.0 + 2.0);
}

#[test]
fn hung_executor_is_killed_after_grace() {
    if python().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let hang = runner(&script(
        dir.path(),
        "hang.py",
        "import time\ntime.sleep(30)\n",
    ))
    .grace(0.3);
    let start = Instant::now();
    let result = hang.run(&ExecJob::new("", "", "f").timeout(0.2)).unwrap();
    assert_eq!(result.status, ExecStatus::Timeout);
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn protocol_violations_are_errors() {
    if python().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let job = ExecJob::new("x = 1", "assert x == 1", "x");

    let crash = runner(&script(
        dir.path(),
        "crash.py",
        "import sys\nsys.stderr.write('boom')\nsys.exit(3)\n",
    ));
    match crash.run(&job) {
        Err(RunnerError::Internal { code, stderr }) => {
            assert_eq!(code, Some(3));
            assert_eq!(stderr, "boom");
        }
        other => panic!("unexpected {other:?}"),
    }

    let garbage = runner(&script(dir.path(), "garbage.py", "print('not json')\n"));
    assert!(matches!(garbage.run(&job), Err(RunnerError::Protocol(_))));

    let future = runner(&script(
        dir.path(),
        "future.py",
        "print('{\"version\": 2, \"status\": \"pass\"}')\n",
    ));
    assert!(matches!(future.run(&job), Err(RunnerError::Protocol(_))));
}

#[test]
fn executor_receives_the_job_verbatim() {
    if python().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let echo = runner(&script(
        dir.path(),
        "echo.py",
        "import json, sys\njob = json.load(sys.stdin)\nok = job == {'version': 1, 'solution_code': 's', 'test_code': 't', 'entry_point': 'e', 'timeout_s': 3.5, 'memory_mb': 1024}\nprint(json.dumps({'version': 1, 'status': 'pass' if ok else 'fail'}))\n",
    ));
    let result = echo.run(&ExecJob::new("s", "t", "e").timeout(3.5)).unwrap();
    assert_eq!(result.status, ExecStatus::Pass);
}
