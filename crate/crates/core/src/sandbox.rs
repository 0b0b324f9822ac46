//! Job dispatch with retry, admission control and health supervision, over
//! three interchangeable backends: a remote execution service, a local
//! interpreter subprocess, and a simulated backend driven by a truth table.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{canonical_expr, normalize, parse_assertion, AssertionCase};
use crate::script::{
    encode_eval_stdout, encode_training_stdout, parse_eval_markers, parse_markers, EvalInputs, EvalOutcome,
    EvalReport, ExecutionReport, JobLayout, RunStatus, ScriptJob, SlotVerdict, TrainingInputs,
};

/// Default cap on captured stdout/stderr per stream.
pub const OUTPUT_CAP: usize = 8 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid supervision config: {0}")]
    Invalid(String),
    #[error("no backend configured: {0}")]
    MissingBackend(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Transient: connection refused, capacity exhausted, spawn failure.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// Not worth retrying.
    #[error("backend rejected job: {0}")]
    Fatal(String),
    #[error("no truth-table entry for candidate {candidate:?} on {test:?}")]
    MissingEntry { candidate: String, test: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Timeout,
    Error,
    Unresponsive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendOutput {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Unhealthy,
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> &'static str;
    fn run(&self, job: &ScriptJob) -> Result<BackendOutput, BackendError>;
    fn health(&self) -> Health;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionConfig {
    pub timeout_s: f64,
    pub max_attempts: u32,
    pub backoff_s: f64,
    pub health_interval_s: f64,
    pub max_inflight: usize,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        Self { timeout_s: 10.0, max_attempts: 5, backoff_s: 60.0, health_interval_s: 30.0, max_inflight: 8 }
    }
}

impl SupervisionConfig {
    /// Short backoff and probe intervals for test suites.
    pub fn test_profile() -> Self {
        Self { backoff_s: 0.05, health_interval_s: 0.05, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("timeout_s", self.timeout_s)?;
        positive("backoff_s", self.backoff_s)?;
        positive("health_interval_s", self.health_interval_s)?;
        if self.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(ConfigError::Invalid("max_inflight must be positive".into()));
        }
        Ok(())
    }
}

/// FIFO admission gate bounding concurrent jobs.
#[derive(Debug)]
struct Limiter {
    state: Mutex<LimiterState>,
    cv: Condvar,
    capacity: usize,
}

#[derive(Debug, Default)]
struct LimiterState {
    next_ticket: u64,
    serving: u64,
    inflight: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(capacity: usize) -> Self {
        Self { state: Mutex::new(LimiterState::default()), cv: Condvar::new(), capacity }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        while !(st.serving == ticket && st.inflight < self.capacity) {
            st = self.cv.wait(st).unwrap();
        }
        st.serving += 1;
        st.inflight += 1;
        self.cv.notify_all();
        Permit(self)
    }

    fn inflight(&self) -> usize {
        self.state.lock().unwrap().inflight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().unwrap();
        st.inflight -= 1;
        self.0.cv.notify_all();
    }
}

/// Shareable client: `execute` may be called from many threads at once.
pub struct SandboxClient {
    backend: Arc<dyn Backend>,
    cfg: SupervisionConfig,
    limiter: Limiter,
    healthy: Arc<AtomicBool>,
}

impl SandboxClient {
    pub fn new(backend: Arc<dyn Backend>, cfg: SupervisionConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let limiter = Limiter::new(cfg.max_inflight);
        Ok(Self { backend, cfg, limiter, healthy: Arc::new(AtomicBool::new(true)) })
    }

    pub fn config(&self) -> &SupervisionConfig {
        &self.cfg
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    pub fn inflight(&self) -> usize {
        self.limiter.inflight()
    }

    /// Runs `job`, retrying transient failures up to `max_attempts` times with
    /// `backoff_s` between tries. Never panics or errors: failures are statuses.
    pub fn execute(&self, job: &ScriptJob) -> RunResult {
        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let mut last_err = String::new();
        for attempt in 1..=self.cfg.max_attempts {
            match self.backend.run(job) {
                Ok(out) => {
                    return RunResult {
                        status: out.status,
                        stdout: out.stdout,
                        stderr: out.stderr,
                        wall_time_ms: out.wall_time_ms,
                        attempts: attempt,
                    }
                }
                Err(BackendError::Unavailable(msg)) => {
                    last_err = msg;
                    if attempt < self.cfg.max_attempts {
                        thread::sleep(Duration::from_secs_f64(self.cfg.backoff_s));
                    }
                }
                Err(e) => {
                    return RunResult {
                        status: ExecStatus::Error,
                        stdout: String::new(),
                        stderr: e.to_string(),
                        wall_time_ms: start.elapsed().as_millis() as u64,
                        attempts: attempt,
                    }
                }
            }
        }
        RunResult {
            status: ExecStatus::Unresponsive,
            stdout: String::new(),
            stderr: last_err,
            wall_time_ms: start.elapsed().as_millis() as u64,
            attempts: self.cfg.max_attempts,
        }
    }

    pub fn health_probe(&self) -> Health {
        let h = self.backend.health();
        self.healthy.store(h == Health::Healthy, Ordering::SeqCst);
        h
    }

    /// Result of the most recent probe (healthy until the first probe fails).
    pub fn last_health(&self) -> Health {
        if self.healthy.load(Ordering::SeqCst) {
            Health::Healthy
        } else {
            Health::Unhealthy
        }
    }

    /// Starts a background thread probing every `health_interval_s`. The
    /// thread stops when the returned handle is dropped.
    pub fn spawn_supervisor(&self) -> Supervisor {
        let backend = Arc::clone(&self.backend);
        let healthy = Arc::clone(&self.healthy);
        let interval = Duration::from_secs_f64(self.cfg.health_interval_s);
        let (tx, rx) = mpsc::channel::<()>();
        let probes = Arc::new(Mutex::new(0u64));
        let counter = Arc::clone(&probes);
        let handle = thread::spawn(move || loop {
            healthy.store(backend.health() == Health::Healthy, Ordering::SeqCst);
            *counter.lock().unwrap() += 1;
            match rx.recv_timeout(interval) {
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                _ => break,
            }
        });
        Supervisor { stop: Some(tx), handle: Some(handle), probes }
    }

    /// Executes a training job and decodes its markers. Runs that did not
    /// finish normally yield a report with no results.
    pub fn run_training(&self, job: &ScriptJob) -> (RunResult, ExecutionReport) {
        let result = self.execute(job);
        let report = decode_training(job, &result);
        (result, report)
    }

    pub fn run_eval(&self, job: &ScriptJob) -> (RunResult, EvalReport) {
        let result = self.execute(job);
        let report = decode_eval(job, &result);
        (result, report)
    }
}

pub struct Supervisor {
    stop: Option<mpsc::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
    probes: Arc<Mutex<u64>>,
}

impl Supervisor {
    pub fn probes(&self) -> u64 {
        *self.probes.lock().unwrap()
    }
}

impl Drop for Supervisor {
    fn drop(&mut self) {
        self.stop.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn decode_training(job: &ScriptJob, result: &RunResult) -> ExecutionReport {
    let shape = match &job.layout {
        JobLayout::Training(t) => match t.shape() {
            Ok(s) => s,
            Err(_) => return ExecutionReport::blank(Default::default(), RunStatus::InfraError),
        },
        JobLayout::Evaluation(_) => return ExecutionReport::blank(Default::default(), RunStatus::InfraError),
    };
    match result.status {
        ExecStatus::Ok => parse_markers(&result.stdout, shape, &job.nonce),
        ExecStatus::Timeout => ExecutionReport::blank(shape, RunStatus::Timeout),
        ExecStatus::Error | ExecStatus::Unresponsive => ExecutionReport::blank(shape, RunStatus::InfraError),
    }
}

pub fn decode_eval(job: &ScriptJob, result: &RunResult) -> EvalReport {
    let n = match &job.layout {
        JobLayout::Evaluation(e) => e.candidates.len(),
        JobLayout::Training(_) => 0,
    };
    let status = match result.status {
        ExecStatus::Ok => return parse_eval_markers(&result.stdout, n, &job.nonce),
        ExecStatus::Timeout => RunStatus::Timeout,
        _ => RunStatus::InfraError,
    };
    EvalReport { status, outcomes: vec![EvalOutcome::Fail; n], anomalies: vec![] }
}

// ---------------------------------------------------------------------------
// Remote service
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunRequest<'a> {
    code: &'a str,
    timeout_s: f64,
}

#[derive(Deserialize)]
struct RunResponse {
    status: String,
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stderr: String,
    #[serde(default)]
    wall_time_ms: f64,
}

/// Client for the execution service: `POST /run`, `GET /health`.
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    slack: Duration,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new().timeout_connect(Duration::from_secs(5)).build();
        Self { base_url, agent, slack: Duration::from_secs(5) }
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn run(&self, job: &ScriptJob) -> Result<BackendOutput, BackendError> {
        let req = RunRequest { code: &job.script, timeout_s: job.timeout_s };
        let resp = self
            .agent
            .post(&format!("{}/run", self.base_url))
            .timeout(Duration::from_secs_f64(job.timeout_s) + self.slack)
            .send_json(&req);
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(if code >= 500 || code == 429 {
                    BackendError::Unavailable(format!("HTTP {code}: {body}"))
                } else {
                    BackendError::Fatal(format!("HTTP {code}: {body}"))
                });
            }
            Err(e) => return Err(BackendError::Unavailable(e.to_string())),
        };
        let body: RunResponse = resp.into_json().map_err(|e| BackendError::Unavailable(format!("bad response: {e}")))?;
        let status = match body.status.as_str() {
            "ok" => ExecStatus::Ok,
            "timeout" => ExecStatus::Timeout,
            "error" => ExecStatus::Error,
            other => return Err(BackendError::Unavailable(format!("unknown status {other:?}"))),
        };
        Ok(BackendOutput { status, stdout: body.stdout, stderr: body.stderr, wall_time_ms: body.wall_time_ms as u64 })
    }

    fn health(&self) -> Health {
        match self.agent.get(&format!("{}/health", self.base_url)).timeout(Duration::from_secs(5)).call() {
            Ok(r) if r.status() == 200 => Health::Healthy,
            _ => Health::Unhealthy,
        }
    }
}

// ---------------------------------------------------------------------------
// Local subprocess
// ---------------------------------------------------------------------------

/// Runs scripts with a local interpreter on a temporary file.
pub struct LocalBackend {
    interpreter: String,
    output_cap: usize,
}

impl LocalBackend {
    pub fn new(interpreter: impl Into<String>) -> Self {
        Self { interpreter: interpreter.into(), output_cap: OUTPUT_CAP }
    }

    pub fn python3() -> Self {
        Self::new("python3")
    }

    /// True when the interpreter can be spawned.
    pub fn available(&self) -> bool {
        self.health() == Health::Healthy
    }
}

fn capture<R: Read + Send + 'static>(mut r: R, cap: usize) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

impl Backend for LocalBackend {
    fn kind(&self) -> &'static str {
        "local"
    }

    fn run(&self, job: &ScriptJob) -> Result<BackendOutput, BackendError> {
        let mut file = tempfile::Builder::new()
            .suffix(".py")
            .tempfile()
            .map_err(|e| BackendError::Unavailable(format!("temp file: {e}")))?;
        std::io::Write::write_all(&mut file, job.script.as_bytes())
            .map_err(|e| BackendError::Unavailable(format!("temp file: {e}")))?;
        let start = Instant::now();
        let mut child = Command::new(&self.interpreter)
            .arg("-u")
            .arg(file.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::Unavailable(format!("spawn {}: {e}", self.interpreter)))?;
        let out = capture(child.stdout.take().expect("piped stdout"), self.output_cap);
        let err = capture(child.stderr.take().expect("piped stderr"), self.output_cap);
        let deadline = Duration::from_secs_f64(job.timeout_s);
        let mut timed_out = false;
        let exit = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break None;
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(BackendError::Unavailable(format!("wait: {e}"))),
            }
        };
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        let status = match exit {
            _ if timed_out => ExecStatus::Timeout,
            Some(s) if s.success() => ExecStatus::Ok,
            _ => ExecStatus::Error,
        };
        Ok(BackendOutput { status, stdout, stderr, wall_time_ms: start.elapsed().as_millis() as u64 })
    }

    fn health(&self) -> Health {
        let ok = Command::new(&self.interpreter)
            .args(["-c", "pass"])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false);
        if ok {
            Health::Healthy
        } else {
            Health::Unhealthy
        }
    }
}

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

/// Ground truth for the simulated backend.
///
/// * `candidates` maps candidate source text to a label and whether it loads.
/// * `outcomes` maps (label, canonical statement) to pass/fail.
/// * `oracle` maps a canonical call expression to the oracle's rendered
///   return value, or `None` when the call raises.
/// * `eval` maps (label, harness source) to an evaluation outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthTable {
    pub candidates: HashMap<String, (String, bool)>,
    pub outcomes: HashMap<(String, String), bool>,
    pub oracle: HashMap<String, Option<String>>,
    pub eval: HashMap<(String, String), EvalOutcome>,
}

impl TruthTable {
    pub fn add_candidate(&mut self, source: &str, label: &str, loads: bool) -> &mut Self {
        self.candidates.insert(source.to_string(), (label.to_string(), loads));
        self
    }

    pub fn set_outcome(&mut self, label: &str, statement: &str, pass: bool) -> &mut Self {
        let key = normalize(statement).unwrap_or_else(|| statement.to_string());
        self.outcomes.insert((label.to_string(), key), pass);
        self
    }

    /// Records the oracle value of `statement`'s call as its expected side.
    pub fn set_oracle_from(&mut self, statement: &str) -> &mut Self {
        let case = parse_assertion(statement);
        if case.is_parsed() {
            let call = canonical_expr(&case.call_expr).unwrap_or(case.call_expr);
            let value = canonical_expr(&case.expected_expr).unwrap_or(case.expected_expr);
            self.oracle.insert(call, Some(value));
        }
        self
    }

    fn label(&self, source: &str) -> Result<Option<&str>, BackendError> {
        if source.trim().is_empty() {
            return Ok(None);
        }
        match self.candidates.get(source) {
            Some((label, true)) => Ok(Some(label)),
            Some((_, false)) => Ok(None),
            None => Err(BackendError::MissingEntry { candidate: abbreviate(source), test: "<load>".into() }),
        }
    }

    fn outcome(&self, label: &str, statement: &str) -> Result<bool, BackendError> {
        let key = normalize(statement).unwrap_or_else(|| statement.to_string());
        self.outcomes
            .get(&(label.to_string(), key.clone()))
            .copied()
            .ok_or(BackendError::MissingEntry { candidate: label.to_string(), test: key })
    }

    fn oracle_value(&self, case: &AssertionCase) -> Result<Option<String>, BackendError> {
        let call = canonical_expr(&case.call_expr).unwrap_or_else(|| case.call_expr.clone());
        self.oracle
            .get(&call)
            .cloned()
            .ok_or(BackendError::MissingEntry { candidate: "<oracle>".into(), test: call })
    }

    /// The report a faithful execution of `inputs` would produce.
    pub fn training_report(&self, inputs: &TrainingInputs) -> Result<ExecutionReport, BackendError> {
        let shape = inputs.shape().map_err(|e| BackendError::Fatal(e.to_string()))?;
        let mut report = ExecutionReport::blank(shape, RunStatus::Ok);
        for (s, suite) in inputs.suites.iter().flatten().enumerate() {
            let mut seen = HashSet::new();
            let mut invalid = suite.host_invalid_count();
            for (j, case) in suite.cases.iter().enumerate() {
                if !case.is_candidate_for_validation() {
                    continue;
                }
                let (stmt, verdict) = if inputs.oracle_code.is_some() {
                    match self.oracle_value(case)? {
                        None => (None, SlotVerdict::ExecError),
                        Some(v) => {
                            let stmt = format!("assert {} == {}", case.call_expr, v);
                            let same = canonical_expr(&case.expected_expr).as_deref() == Some(v.as_str());
                            (Some(stmt), if same { SlotVerdict::Valid } else { SlotVerdict::WrongAnswer })
                        }
                    }
                } else {
                    (Some(case.canonical.clone()), SlotVerdict::Valid)
                };
                let slot = &mut report.suites[s].slots[j];
                match stmt {
                    None => {
                        invalid += 1;
                        slot.verdict = SlotVerdict::ExecError;
                    }
                    Some(stmt) => {
                        let key = normalize(&stmt).unwrap_or_else(|| stmt.clone());
                        if !seen.insert(key) {
                            invalid += 1;
                            slot.verdict = SlotVerdict::Duplicate;
                        } else {
                            if verdict == SlotVerdict::WrongAnswer {
                                invalid += 1;
                            }
                            slot.verdict = verdict;
                            slot.corrected = Some(stmt);
                        }
                    }
                }
            }
            report.suites[s].invalid_count = Some(invalid);
        }
        for (m, source) in inputs.candidates.iter().enumerate() {
            let Some(label) = self.label(source)? else {
                // Code that fails to load fails every announced test.
                for n in 0..shape.suites_per_candidate {
                    let s = m * shape.suites_per_candidate + n;
                    for j in 0..shape.tests_per_suite {
                        if report.suites[s].slots[j].verdict.is_usable() {
                            report.candidates[m].generated[n][j] = Some(false);
                        }
                    }
                }
                continue;
            };
            let cand = &mut report.candidates[m];
            cand.code_valid = true;
            for (i, case) in inputs.golden.iter().enumerate() {
                cand.golden[i] = self.outcome(label, &case.canonical)?;
            }
            for (i, case) in inputs.hist.iter().enumerate() {
                cand.hist[i] = self.outcome(label, &case.canonical)?;
            }
            for n in 0..shape.suites_per_candidate {
                let s = m * shape.suites_per_candidate + n;
                for j in 0..shape.tests_per_suite {
                    if let Some(stmt) = &report.suites[s].slots[j].corrected {
                        let pass = self.outcome(label, stmt)?;
                        report.candidates[m].generated[n][j] = Some(pass);
                    }
                }
            }
        }
        Ok(report)
    }

    pub fn eval_outcomes(&self, inputs: &EvalInputs) -> Result<Vec<EvalOutcome>, BackendError> {
        inputs
            .candidates
            .iter()
            .map(|src| match self.label(src)? {
                None => Ok(EvalOutcome::Fail),
                Some(label) => self.eval.get(&(label.to_string(), inputs.harness_code.clone())).copied().ok_or(
                    BackendError::MissingEntry { candidate: label.to_string(), test: abbreviate(&inputs.harness_code) },
                ),
            })
            .collect()
    }
}

fn abbreviate(s: &str) -> String {
    let line = s.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    line.chars().take(60).collect()
}

/// Fabricates marker-protocol stdout from a [`TruthTable`], so the whole
/// pipeline runs without a guest interpreter.
pub struct SimulatedBackend {
    table: TruthTable,
}

impl SimulatedBackend {
    pub fn new(table: TruthTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &TruthTable {
        &self.table
    }
}

impl Backend for SimulatedBackend {
    fn kind(&self) -> &'static str {
        "simulated"
    }

    fn run(&self, job: &ScriptJob) -> Result<BackendOutput, BackendError> {
        let stdout = match &job.layout {
            JobLayout::Training(inputs) => {
                let report = self.table.training_report(inputs)?;
                let hist: Vec<String> = inputs.hist.iter().map(|c| c.canonical.clone()).collect();
                encode_training_stdout(&report, &job.nonce, Some(&hist))
            }
            JobLayout::Evaluation(inputs) => encode_eval_stdout(&self.table.eval_outcomes(inputs)?, &job.nonce),
        };
        Ok(BackendOutput { status: ExecStatus::Ok, stdout, stderr: String::new(), wall_time_ms: 0 })
    }

    fn health(&self) -> Health {
        Health::Healthy
    }
}
