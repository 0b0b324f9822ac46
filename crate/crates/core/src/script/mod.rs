//! Synthesis of batch execution scripts and decoding of their output.
//!
//! A training job validates every generated test against the oracle and then
//! evaluates all candidates in one guest process. An evaluation job runs a
//! harness `check` against each candidate under a per-candidate timer.
//! Both communicate exclusively through the marker lines in [`markers`].

pub mod markers;
pub mod pystr;
mod templates;

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{AssertionCase, TestSuite};
pub use markers::{
    encode_eval_stdout, encode_training_stdout, parse_eval_markers, parse_markers, CandidateReport, EvalOutcome,
    EvalReport, ExecutionReport, MarkerEvent, MarkerKind, Nonce, ReportShape, RunStatus, SlotReport, SlotVerdict,
    SuiteReport,
};

/// Literal replaced inside the sandbox by the oracle's rendering of a value.
pub const FILL_PLACEHOLDER: &str = "__TO_BE_FILLED__";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("batch has no candidates")]
    EmptyBatch,
    #[error("ragged batch: {0}")]
    Shape(String),
    #[error("timeout must be positive")]
    BadTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Training,
    Evaluation,
}

/// Structured inputs of a training batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInputs {
    pub question_id: String,
    /// Reference solution. Without it, generated tests are taken at face
    /// value (their own expected answers), as when verifying at inference time.
    pub oracle_code: Option<String>,
    pub candidates: Vec<String>,
    /// `suites[m][n]`: the n-th suite evaluated against candidate m.
    pub suites: Vec<Vec<TestSuite>>,
    pub hist: Vec<AssertionCase>,
    pub golden: Vec<AssertionCase>,
}

impl TrainingInputs {
    /// Checks the batch is rectangular and returns its shape.
    pub fn shape(&self) -> Result<ReportShape, ScriptError> {
        if self.candidates.is_empty() {
            return Err(ScriptError::EmptyBatch);
        }
        if self.suites.len() != self.candidates.len() {
            return Err(ScriptError::Shape(format!(
                "{} candidates but {} suite rows",
                self.candidates.len(),
                self.suites.len()
            )));
        }
        let n = self.suites[0].len();
        if self.suites.iter().any(|row| row.len() != n) {
            return Err(ScriptError::Shape("suite rows differ in length".into()));
        }
        let k = self.suites.iter().flatten().map(TestSuite::len).next().unwrap_or(0);
        if self.suites.iter().flatten().any(|s| s.len() != k) {
            return Err(ScriptError::Shape("suites differ in size".into()));
        }
        Ok(ReportShape {
            candidates: self.candidates.len(),
            suites_per_candidate: n,
            tests_per_suite: k,
            hist: self.hist.len(),
            golden: self.golden.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInputs {
    pub question_id: String,
    pub harness_code: String,
    pub entry_point: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobLayout {
    Training(TrainingInputs),
    Evaluation(EvalInputs),
}

/// A self-contained guest script plus the structure it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptJob {
    pub script: String,
    pub timeout_s: f64,
    pub question_id: String,
    pub kind: JobKind,
    pub nonce: Nonce,
    pub layout: JobLayout,
}

impl ScriptJob {
    pub fn training_shape(&self) -> Option<ReportShape> {
        match &self.layout {
            JobLayout::Training(t) => t.shape().ok(),
            JobLayout::Evaluation(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum NonceMode {
    /// Hash of the job inputs.
    #[default]
    Derived,
    Fixed(Nonce),
    /// Bare marker tokens.
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOptions {
    pub timeout_s: f64,
    pub nonce: NonceMode,
}

impl Default for ScriptOptions {
    fn default() -> Self {
        Self { timeout_s: 10.0, nonce: NonceMode::Derived }
    }
}

impl ScriptOptions {
    fn resolve_nonce(&self, parts: impl FnOnce() -> Vec<String>) -> Nonce {
        match &self.nonce {
            NonceMode::Derived => Nonce::derive(parts()),
            NonceMode::Fixed(n) => n.clone(),
            NonceMode::Disabled => Nonce::none(),
        }
    }
}

/// Single-pass `{{NAME}}` substitution; inserted values are never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => panic!("template placeholder {name} has no value"),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn preamble(nonce: &Nonce) -> String {
    fill(
        templates::PREAMBLE,
        &[("NONCE", &pystr::literal(nonce.as_str())), ("PRELUDE", &pystr::literal(templates::PRELUDE))],
    )
}

/// Names bound at the top level of `code` by `def`, `async def` or `class`.
pub fn top_level_names(code: &str) -> Vec<String> {
    let mut names = Vec::new();
    for line in code.lines() {
        let rest = line
            .strip_prefix("def ")
            .or_else(|| line.strip_prefix("async def "))
            .or_else(|| line.strip_prefix("class "));
        if let Some(rest) = rest {
            let name: String = rest.trim_start().chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            if !name.is_empty() && !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names
}

fn suites_literal(inputs: &TrainingInputs) -> String {
    let mut out = String::from("[\n");
    for suite in inputs.suites.iter().flatten() {
        let mut stmts = Vec::new();
        let mut calls = Vec::new();
        let mut answers = Vec::new();
        for case in &suite.cases {
            if case.is_candidate_for_validation() {
                let stmt = if inputs.oracle_code.is_some() {
                    format!("assert {} == {FILL_PLACEHOLDER}", case.call_expr)
                } else {
                    case.canonical.clone()
                };
                stmts.push(pystr::literal(&stmt));
                calls.push(pystr::literal(&case.call_expr));
                answers.push(pystr::literal(&case.expected_expr));
            } else {
                stmts.push("None".into());
                calls.push("None".into());
                answers.push("None".into());
            }
        }
        let _ = writeln!(
            out,
            "    (\n        [{}],\n        [{}],\n        [{}],\n        {},\n    ),",
            stmts.join(", "),
            calls.join(", "),
            answers.join(", "),
            suite.host_invalid_count()
        );
    }
    out.push(']');
    out
}

/// Builds the training batch script for one question.
pub fn build_training_script(inputs: &TrainingInputs, opts: &ScriptOptions) -> Result<ScriptJob, ScriptError> {
    let shape = inputs.shape()?;
    if opts.timeout_s.is_nan() || opts.timeout_s <= 0.0 {
        return Err(ScriptError::BadTimeout);
    }
    let nonce = opts.resolve_nonce(|| {
        let mut parts = vec!["training".to_string(), inputs.question_id.clone()];
        parts.push(inputs.oracle_code.clone().unwrap_or_default());
        parts.extend(inputs.candidates.iter().cloned());
        parts.extend(inputs.suites.iter().flatten().flat_map(|s| s.cases.iter().map(|c| c.canonical.clone())));
        parts.extend(inputs.hist.iter().map(|c| c.canonical.clone()));
        parts.extend(inputs.golden.iter().map(|c| c.canonical.clone()));
        parts
    });

    let gt_names = inputs.oracle_code.as_deref().map(top_level_names).unwrap_or_default();
    let golden: Vec<&str> = inputs.golden.iter().map(|c| c.canonical.as_str()).collect();
    let hist: Vec<&str> = inputs.hist.iter().map(|c| c.canonical.as_str()).collect();
    let gt_names_lit = format!(
        "[{}]",
        gt_names.iter().map(|n| pystr::literal(n)).collect::<Vec<_>>().join(", ")
    );
    let script = fill(
        templates::TRAINING,
        &[
            ("PREAMBLE", &preamble(&nonce)),
            ("GT_CODE", &pystr::opt_literal(inputs.oracle_code.as_deref())),
            ("GT_FUNCTION_NAMES", &gt_names_lit),
            ("SUITES_PER_CANDIDATE", &shape.suites_per_candidate.to_string()),
            ("SUITES", &suites_literal(inputs)),
            ("GT_TESTCASE_LIST", &pystr::list_literal(&golden, "")),
            ("ATTACK_TESTCASE_LIST", &pystr::list_literal(&hist, "")),
            ("CANDIDATES", &pystr::list_literal(&inputs.candidates, "")),
        ],
    );
    Ok(ScriptJob {
        script,
        timeout_s: opts.timeout_s,
        question_id: inputs.question_id.clone(),
        kind: JobKind::Training,
        nonce,
        layout: JobLayout::Training(inputs.clone()),
    })
}

/// Builds the evaluation batch script. `opts.timeout_s` is the per-candidate
/// guard; the job-level deadline is the same value times the candidate count.
pub fn build_eval_script(inputs: &EvalInputs, opts: &ScriptOptions) -> Result<ScriptJob, ScriptError> {
    if inputs.candidates.is_empty() {
        return Err(ScriptError::EmptyBatch);
    }
    if opts.timeout_s.is_nan() || opts.timeout_s <= 0.0 {
        return Err(ScriptError::BadTimeout);
    }
    let nonce = opts.resolve_nonce(|| {
        let mut parts = vec![
            "evaluation".to_string(),
            inputs.question_id.clone(),
            inputs.harness_code.clone(),
            inputs.entry_point.clone(),
        ];
        parts.extend(inputs.candidates.iter().cloned());
        parts
    });
    let mut functions = String::new();
    let mut calls = String::new();
    for i in 0..inputs.candidates.len() {
        let _ = write!(functions, "\ndef c_{i}():\n    with _quiet():\n        _harness['check'](_load({i}))\n\n");
        let _ = writeln!(calls, "run_safe(c_{i})");
    }
    let script = fill(
        templates::EVALUATION,
        &[
            ("PREAMBLE", &preamble(&nonce)),
            ("TIMEOUT", &format_seconds(opts.timeout_s)),
            ("ENTRY_POINT", &pystr::literal(&inputs.entry_point)),
            ("TEST_HARNESS_CODE", &pystr::literal(&inputs.harness_code)),
            ("CANDIDATES", &pystr::list_literal(&inputs.candidates, "")),
            ("CANDIDATE_FUNCTIONS", &functions),
            ("RUN_CALLS", &calls),
        ],
    );
    Ok(ScriptJob {
        script,
        timeout_s: opts.timeout_s * inputs.candidates.len() as f64,
        question_id: inputs.question_id.clone(),
        kind: JobKind::Evaluation,
        nonce,
        layout: JobLayout::Evaluation(inputs.clone()),
    })
}

fn format_seconds(t: f64) -> String {
    let s = format!("{t}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Builds a `check(candidate)` harness from assertion statements by binding
/// the entry-point name to the candidate inside the function.
pub fn harness_from_asserts(entry_point: &str, statements: &[String]) -> String {
    let mut out = format!("def check(candidate):\n    {entry_point} = candidate\n");
    for s in statements {
        let _ = writeln!(out, "    {}", s.trim());
    }
    if statements.is_empty() {
        out.push_str("    pass\n");
    }
    out
}
