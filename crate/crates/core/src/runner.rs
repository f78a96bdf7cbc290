//! Executes student attempts against a task's test suite in a resource-limited
//! interpreter subprocess.
//!
//! One subprocess serves a whole request. The injected harness (see
//! `harness/harness.py`) compiles the attempt, calls the target function for
//! every test case and prints one JSON line per test. The parent enforces a
//! per-test watchdog on top of the harness's own alarm; when the watchdog
//! fires the child is killed, the current test is recorded as a timeout and a
//! fresh child resumes with the remaining tests.

use std::process::Stdio;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::process::{Child, ChildStdout, Command};
use tokio::sync::Semaphore;

use crate::domain::{Comparison, TestCase, TestSuite};
use crate::error::RunnerError;

const HARNESS: &str = include_str!("../harness/harness.py");

/// Slack granted on top of the per-test timeout before the child is killed.
pub const KILL_GRACE_MS: u64 = 500;
const STARTUP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub cpu_ms: u64,
    pub mem_bytes: u64,
    pub per_test_timeout_ms: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            cpu_ms: 2000,
            mem_bytes: 128 * 1024 * 1024,
            per_test_timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    SyntaxError,
    RecursionLimit,
    RuntimeError,
    Timeout,
    MemoryLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    WrongValue { actual: Value },
    Raised { error_kind: ErrorKind, message: String },
    Timeout,
}

impl Outcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, Outcome::Pass)
    }

    pub fn error_kind(&self) -> Option<ErrorKind> {
        match self {
            Outcome::Raised { error_kind, .. } => Some(*error_kind),
            Outcome::Timeout => Some(ErrorKind::Timeout),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    AllPassed,
    SomeFailed,
    NotRunnable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    pub compile_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_message: Option<String>,
    pub overall: Overall,
}

impl TestReport {
    fn from_results(results: Vec<TestResult>, compile_ok: bool, compile_message: Option<String>) -> Self {
        let overall = if !compile_ok {
            Overall::NotRunnable
        } else if results.iter().all(|r| r.outcome.is_pass()) {
            Overall::AllPassed
        } else {
            Overall::SomeFailed
        };
        Self { results, compile_ok, compile_message, overall }
    }

    fn not_runnable(suite: &TestSuite, message: &str) -> Self {
        let results = suite
            .cases()
            .iter()
            .map(|case| TestResult {
                test_id: case.id.clone(),
                outcome: Outcome::Raised {
                    error_kind: ErrorKind::SyntaxError,
                    message: message.to_string(),
                },
                wall_time_ms: 0,
            })
            .collect();
        Self::from_results(results, false, Some(message.to_string()))
    }

    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_pass()).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestResult> {
        self.results.iter().filter(|r| !r.outcome.is_pass())
    }
}

/// One line of harness output.
#[derive(Debug, Deserialize)]
struct WireResult {
    test_id: String,
    status: WireStatus,
    #[serde(default)]
    actual: Option<Value>,
    #[serde(default)]
    error_kind: Option<ErrorKind>,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    elapsed_ms: u64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireStatus {
    Pass,
    WrongValue,
    Raised,
}

#[derive(Debug, Deserialize)]
struct Handshake {
    compile_ok: bool,
    #[serde(default)]
    message: Option<String>,
}

impl From<WireResult> for TestResult {
    fn from(wire: WireResult) -> Self {
        let outcome = match wire.status {
            WireStatus::Pass => Outcome::Pass,
            WireStatus::WrongValue => Outcome::WrongValue { actual: wire.actual.unwrap_or(Value::Null) },
            WireStatus::Raised => match wire.error_kind.unwrap_or(ErrorKind::RuntimeError) {
                ErrorKind::Timeout => Outcome::Timeout,
                kind => Outcome::Raised { error_kind: kind, message: wire.message.unwrap_or_default() },
            },
        };
        TestResult { test_id: wire.test_id, outcome, wall_time_ms: wire.elapsed_ms }
    }
}

fn wire_case(case: &TestCase) -> Value {
    let mut value = json!({
        "id": case.id,
        "function": case.call.function,
        "args": case.call.args,
        "expected": case.expected,
    });
    match case.comparison {
        Comparison::Exact => value["comparison"] = json!("exact"),
        Comparison::Numeric { epsilon } => {
            value["comparison"] = json!("numeric");
            value["epsilon"] = json!(epsilon);
        }
    }
    value
}

/// Runs attempts in isolated interpreter processes, at most `max_concurrent` at a time.
#[derive(Debug, Clone)]
pub struct Sandbox {
    interpreter: String,
    limits: Limits,
    permits: Arc<Semaphore>,
    isolate_network: bool,
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::new(Limits::default())
    }
}

impl Sandbox {
    pub const DEFAULT_MAX_CONCURRENT: usize = 4;

    pub fn new(limits: Limits) -> Self {
        Self {
            interpreter: "python3".to_string(),
            limits,
            permits: Arc::new(Semaphore::new(Self::DEFAULT_MAX_CONCURRENT)),
            isolate_network: true,
        }
    }

    pub fn with_interpreter(mut self, interpreter: impl Into<String>) -> Self {
        self.interpreter = interpreter.into();
        self
    }

    pub fn with_max_concurrent(mut self, max: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(max.max(1)));
        self
    }

    /// Disables the network namespace. The audit hook still blocks sockets.
    pub fn without_network_namespace(mut self) -> Self {
        self.isolate_network = false;
        self
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub async fn run_attempt(&self, source: &str, suite: &TestSuite) -> Result<TestReport, RunnerError> {
        if suite.is_empty() {
            return Err(RunnerError::EmptySuite);
        }
        if normalize_source(source).is_empty() {
            return Ok(TestReport::not_runnable(suite, "no executable code"));
        }
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| RunnerError::SandboxUnavailable("sandbox pool closed".into()))?;

        let cases = suite.cases();
        let mut results = Vec::with_capacity(cases.len());
        while results.len() < cases.len() {
            let remaining = &cases[results.len()..];
            match self.run_batch(source, remaining, &mut results).await? {
                Batch::CompileError(message) => return Ok(TestReport::not_runnable(suite, &message)),
                Batch::Completed => {}
                Batch::Killed { elapsed_ms } => {
                    let case = &cases[results.len()];
                    results.push(TestResult {
                        test_id: case.id.clone(),
                        outcome: Outcome::Timeout,
                        wall_time_ms: elapsed_ms,
                    });
                }
            }
        }
        Ok(TestReport::from_results(results, true, None))
    }

    async fn run_batch(
        &self,
        source: &str,
        cases: &[TestCase],
        results: &mut Vec<TestResult>,
    ) -> Result<Batch, RunnerError> {
        let mut child = self.spawn(cases.len())?;
        let payload = json!({
            "source": source,
            "per_test_timeout_ms": self.limits.per_test_timeout_ms,
            "tests": cases.iter().map(wire_case).collect::<Vec<_>>(),
        });
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let bytes = serde_json::to_vec(&payload).expect("payload serializes");
        // The child may already be gone; the handshake read reports that.
        let _ = stdin.write_all(&bytes).await;
        drop(stdin);

        let mut lines = BufReader::new(stdout).lines();
        let handshake = match tokio::time::timeout(STARTUP_TIMEOUT, lines.next_line()).await {
            Ok(Ok(Some(line))) => serde_json::from_str::<Handshake>(&line)
                .map_err(|e| RunnerError::SandboxUnavailable(format!("bad harness handshake: {e}")))?,
            Ok(Ok(None)) => {
                let status = child.wait().await.ok();
                return Err(RunnerError::SandboxUnavailable(format!(
                    "interpreter exited before handshake ({status:?})"
                )));
            }
            Ok(Err(e)) => return Err(RunnerError::SandboxUnavailable(e.to_string())),
            Err(_) => {
                let _ = child.kill().await;
                return Err(RunnerError::SandboxUnavailable("interpreter startup timed out".into()));
            }
        };
        if !handshake.compile_ok {
            let _ = child.wait().await;
            return Ok(Batch::CompileError(handshake.message.unwrap_or_else(|| "SyntaxError".into())));
        }

        let budget = Duration::from_millis(self.limits.per_test_timeout_ms + KILL_GRACE_MS);
        for index in 0..cases.len() {
            // The first read also covers module-level code, which has its own alarm.
            let wait = if index == 0 { budget + Duration::from_millis(self.limits.per_test_timeout_ms) } else { budget };
            let started = Instant::now();
            match read_result(&mut lines, wait).await {
                Some(result) => results.push(result),
                None => {
                    let _ = child.kill().await;
                    let elapsed_ms = started.elapsed().as_millis() as u64;
                    return Ok(Batch::Killed { elapsed_ms });
                }
            }
        }
        let _ = child.wait().await;
        Ok(Batch::Completed)
    }

    fn spawn(&self, test_count: usize) -> Result<Child, RunnerError> {
        let mut command = Command::new(&self.interpreter);
        command
            .arg("-I")
            .arg("-S")
            .arg("-c")
            .arg(HARNESS)
            .env_clear()
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .current_dir("/")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .kill_on_drop(true);

        let cpu_secs = (self.limits.cpu_ms * test_count as u64 + self.limits.per_test_timeout_ms).div_ceil(1000) + 1;
        let mem_bytes = self.limits.mem_bytes;
        let isolate_network = self.isolate_network;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            command.pre_exec(move || {
                apply_rlimit(libc::RLIMIT_AS, mem_bytes, mem_bytes)?;
                apply_rlimit(libc::RLIMIT_CPU, cpu_secs, cpu_secs + 1)?;
                apply_rlimit(libc::RLIMIT_FSIZE, 0, 0)?;
                apply_rlimit(libc::RLIMIT_CORE, 0, 0)?;
                if isolate_network {
                    // Unprivileged user + network namespace; ignored where unsupported.
                    libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
                }
                Ok(())
            });
        }
        command
            .spawn()
            .map_err(|e| RunnerError::SandboxUnavailable(format!("cannot launch `{}`: {e}", self.interpreter)))
    }
}

enum Batch {
    Completed,
    CompileError(String),
    Killed { elapsed_ms: u64 },
}

fn apply_rlimit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> std::io::Result<()> {
    let limit = libc::rlimit { rlim_cur: soft as libc::rlim_t, rlim_max: hard as libc::rlim_t };
    // SAFETY: `limit` is a valid rlimit for the duration of the call.
    if unsafe { libc::setrlimit(resource, &limit) } == 0 {
        Ok(())
    } else {
        Err(std::io::Error::last_os_error())
    }
}

async fn read_result(lines: &mut Lines<BufReader<ChildStdout>>, wait: Duration) -> Option<TestResult> {
    let line = tokio::time::timeout(wait, lines.next_line()).await.ok()?.ok()??;
    serde_json::from_str::<WireResult>(&line).ok().map(TestResult::from)
}

/// Removes `#` comments (outside string literals), trims every line, collapses
/// whitespace runs and drops blank lines.
pub fn normalize_source(source: &str) -> String {
    let stripped = strip_comments(source);
    stripped
        .lines()
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_comments(source: &str) -> String {
    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len());
    let mut i = 0;
    // Active string delimiter: (quote char, triple?)
    let mut in_string: Option<(char, bool)> = None;
    while i < chars.len() {
        let c = chars[i];
        match in_string {
            Some((quote, triple)) => {
                if c == '\\' {
                    out.push(c);
                    if let Some(&next) = chars.get(i + 1) {
                        out.push(next);
                    }
                    i += 2;
                    continue;
                }
                if c == quote {
                    if !triple {
                        in_string = None;
                    } else if chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                        out.push_str(&format!("{quote}{quote}{quote}"));
                        in_string = None;
                        i += 3;
                        continue;
                    }
                } else if c == '\n' && !triple {
                    in_string = None;
                }
                out.push(c);
                i += 1;
            }
            None => match c {
                '#' => {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                }
                '\'' | '"' => {
                    let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
                    in_string = Some((c, triple));
                    if triple {
                        out.push_str(&format!("{c}{c}{c}"));
                        i += 3;
                    } else {
                        out.push(c);
                        i += 1;
                    }
                }
                _ => {
                    out.push(c);
                    i += 1;
                }
            },
        }
    }
    out
}

/// `false` iff the source is empty or matches the starter code once comments
/// and whitespace are normalized away.
pub fn is_attempt(source: &str, starter_code: &str) -> bool {
    let normalized = normalize_source(source);
    !normalized.is_empty() && normalized != normalize_source(starter_code)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STARTER: &str = "def factorial(n):\n    # your code here\n    pass\n";

    #[test]
    fn starter_with_blank_lines_is_not_an_attempt() {
        let source = "\n\ndef factorial(n):\n\n    # your code here\n    pass\n\n\n";
        assert!(!is_attempt(source, STARTER));
    }

    #[test]
    fn any_new_line_is_an_attempt() {
        let source = format!("{STARTER}    return n\n");
        assert!(is_attempt(&source, STARTER));
    }

    #[test]
    fn comments_only_is_not_an_attempt() {
        let source = "# I don't know where to start\n   # maybe recursion?\n";
        assert_eq!(strip_comments(source).trim(), "");
        assert!(!is_attempt(source, STARTER));
        assert!(!is_attempt("", STARTER));
    }

    #[test]
    fn hash_inside_string_is_kept() {
        assert_eq!(normalize_source("x = '#not a comment'  # real"), "x = '#not a comment'");
        assert_eq!(normalize_source("s = \"\"\"a # b\n c\"\"\" # d"), "s = \"\"\"a # b\nc\"\"\"");
    }

    #[test]
    fn report_overall_follows_outcomes() {
        let pass = TestResult { test_id: "a".into(), outcome: Outcome::Pass, wall_time_ms: 0 };
        let fail = TestResult { test_id: "b".into(), outcome: Outcome::Timeout, wall_time_ms: 0 };
        assert_eq!(TestReport::from_results(vec![pass.clone()], true, None).overall, Overall::AllPassed);
        assert_eq!(TestReport::from_results(vec![pass.clone(), fail], true, None).overall, Overall::SomeFailed);
        assert_eq!(TestReport::from_results(vec![pass], false, None).overall, Overall::NotRunnable);
    }

    #[test]
    fn wire_line_parses() {
        let wire: WireResult = serde_json::from_str(
            r#"{"test_id":"t","status":"raised","error_kind":"RecursionLimit","message":"RecursionError: x","elapsed_ms":3}"#,
        )
        .unwrap();
        let result = TestResult::from(wire);
        assert_eq!(result.outcome.error_kind(), Some(ErrorKind::RecursionLimit));
        let wire: WireResult =
            serde_json::from_str(r#"{"test_id":"t","status":"raised","error_kind":"Timeout"}"#).unwrap();
        assert_eq!(TestResult::from(wire).outcome, Outcome::Timeout);
    }
}
