//! Evaluation metrics (avg@k, pass@k, mut@k, Mul), a single-fault mutant
//! generator and the Best-of-N selector.
//!
//! pass@k and mut@k use a best-of-k convention: each is the maximum over the
//! k suites of the per-suite score, in percent.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{normalize, parse_assertion, AssertionCase, SuiteSource, TestSuite};
use crate::lex::{is_ident_byte, string_literal_at};
use crate::rewards::{classify_validation, CaseValidation, ValidationSummary};
use crate::sandbox::{ExecStatus, SandboxClient};
use crate::script::{
    build_eval_script, build_training_script, harness_from_asserts, EvalInputs, EvalOutcome, RunStatus,
    ScriptOptions, TrainingInputs,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least {k} samples, got {got}")]
    Shape { k: usize, got: usize },
    #[error("no mutation site in source")]
    NoSites,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("sandbox run failed: {0}")]
    Sandbox(String),
}

/// Mean pass rate over the first `k` samples, in percent.
pub fn avg_at_k(outcomes: &[bool], k: usize) -> Result<f64, EvalError> {
    if k == 0 || outcomes.len() < k {
        return Err(EvalError::Shape { k, got: outcomes.len() });
    }
    let pass = outcomes[..k].iter().filter(|&&b| b).count();
    Ok(pass as f64 / k as f64 * 100.0)
}

pub fn mul_score(pass_pct: f64, mut_pct: f64) -> f64 {
    pass_pct * mut_pct / 100.0
}

// ---------------------------------------------------------------------------
// Mutants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    ArithSwap,
    CmpSwap,
    ConstOffByOne,
    BoolFlip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub source: String,
    pub operator: MutationOp,
    /// 1-based line and column of the mutated token.
    pub site: (usize, usize),
    pub original: String,
    pub replacement: String,
    /// Suite indices whose valid tests kill this mutant.
    #[serde(default)]
    pub killed_by: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Edit {
    op: MutationOp,
    start: usize,
    end: usize,
    replacement: String,
}

fn prev_code_byte(src: &[u8], i: usize) -> Option<u8> {
    src[..i].iter().rev().copied().find(|b| *b != b' ' && *b != b'\t')
}

/// A `+ - * /` is treated as binary only after an operand.
fn after_operand(src: &[u8], i: usize) -> bool {
    match prev_code_byte(src, i) {
        Some(b) => is_ident_byte(b) || matches!(b, b')' | b']' | b'}' | b'"' | b'\''),
        None => false,
    }
}

fn ends_keyword(src: &[u8], i: usize) -> bool {
    let mut j = i;
    while j > 0 && matches!(src[j - 1], b' ' | b'\t') {
        j -= 1;
    }
    let start = src[..j].iter().rposition(|b| !is_ident_byte(*b)).map_or(0, |p| p + 1);
    matches!(
        &src[start..j],
        b"return" | b"in" | b"not" | b"and" | b"or" | b"if" | b"else" | b"elif" | b"while" | b"yield" | b"lambda"
            | b"assert" | b"is"
    )
}

fn mutation_edits(source: &str) -> Vec<Edit> {
    let src = source.as_bytes();
    let mut edits = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        if let Some(end) = string_literal_at(src, i) {
            i = match end {
                Ok(e) | Err(e) => e,
            };
            continue;
        }
        if c == b'#' {
            while i < src.len() && src[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if is_ident_byte(c) && !c.is_ascii_digit() {
            let start = i;
            while i < src.len() && is_ident_byte(src[i]) {
                i += 1;
            }
            let word = &source[start..i];
            let flip = match word {
                "True" => Some("False"),
                "False" => Some("True"),
                _ => None,
            };
            if let Some(r) = flip {
                edits.push(Edit { op: MutationOp::BoolFlip, start, end: i, replacement: r.into() });
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < src.len() && (is_ident_byte(src[i]) || src[i] == b'.') {
                i += 1;
            }
            let lit = &source[start..i];
            let preceded_by_dot = start > 0 && src[start - 1] == b'.';
            if !preceded_by_dot && lit.bytes().all(|b| b.is_ascii_digit()) && (lit == "0" || !lit.starts_with('0')) {
                if let Ok(v) = lit.parse::<u64>() {
                    edits.push(Edit { op: MutationOp::ConstOffByOne, start, end: i, replacement: (v + 1).to_string() });
                    if v > 0 {
                        edits.push(Edit { op: MutationOp::ConstOffByOne, start, end: i, replacement: (v - 1).to_string() });
                    }
                }
            }
            continue;
        }
        let next = src.get(i + 1).copied();
        let two = |a: u8| next == Some(a);
        match c {
            b'+' | b'-' if !(c == b'-' && two(b'>')) => {
                if after_operand(src, i) && !ends_keyword(src, i) {
                    let r = if c == b'+' { "-" } else { "+" };
                    edits.push(Edit { op: MutationOp::ArithSwap, start: i, end: i + 1, replacement: r.into() });
                }
                i += if two(b'=') { 2 } else { 1 };
                continue;
            }
            b'*' | b'/' => {
                if two(c) {
                    i += if src.get(i + 2) == Some(&b'=') { 3 } else { 2 };
                    continue;
                }
                if after_operand(src, i) && !ends_keyword(src, i) {
                    let r = if c == b'*' { "/" } else { "*" };
                    edits.push(Edit { op: MutationOp::ArithSwap, start: i, end: i + 1, replacement: r.into() });
                }
                i += if two(b'=') { 2 } else { 1 };
                continue;
            }
            b'<' | b'>' => {
                if two(c) {
                    i += if src.get(i + 2) == Some(&b'=') { 3 } else { 2 };
                    continue;
                }
                if c == b'>' && i > 0 && src[i - 1] == b'-' {
                    i += 1;
                    continue;
                }
                if two(b'=') {
                    let r = if c == b'<' { "<" } else { ">" };
                    edits.push(Edit { op: MutationOp::CmpSwap, start: i, end: i + 2, replacement: r.into() });
                    i += 2;
                } else {
                    let r = if c == b'<' { "<=" } else { ">=" };
                    edits.push(Edit { op: MutationOp::CmpSwap, start: i, end: i + 1, replacement: r.into() });
                    i += 1;
                }
                continue;
            }
            b'=' | b'!' if two(b'=') => {
                let r = if c == b'=' { "!=" } else { "==" };
                edits.push(Edit { op: MutationOp::CmpSwap, start: i, end: i + 2, replacement: r.into() });
                i += 2;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    edits
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

/// Enumerates single-site mutants in source order and, when there are more
/// than `limit`, keeps a uniform seeded subsample (still in source order).
pub fn generate_mutants(source: &str, limit: usize, seed: u64) -> Result<Vec<Mutant>, EvalError> {
    let edits = mutation_edits(source);
    if edits.is_empty() {
        return Err(EvalError::NoSites);
    }
    let chosen: Vec<usize> = if edits.len() > limit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, edits.len(), limit).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..edits.len()).collect()
    };
    Ok(chosen
        .into_iter()
        .map(|e| {
            let edit = &edits[e];
            let mut text = String::with_capacity(source.len() + 2);
            text.push_str(&source[..edit.start]);
            text.push_str(&edit.replacement);
            text.push_str(&source[edit.end..]);
            Mutant {
                source: text,
                operator: edit.op,
                site: line_col(source, edit.start),
                original: source[edit.start..edit.end].to_string(),
                replacement: edit.replacement.clone(),
                killed_by: BTreeSet::new(),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Suite metrics
// ---------------------------------------------------------------------------

fn pad(suites: &[TestSuite]) -> Vec<TestSuite> {
    let width = suites.iter().map(TestSuite::len).max().unwrap_or(0).max(1);
    suites
        .iter()
        .map(|s| {
            let mut s = s.clone();
            while s.cases.len() < width {
                s.cases.push(AssertionCase::placeholder());
            }
            s
        })
        .collect()
}

fn sandbox_err(status: ExecStatus, detail: &str) -> EvalError {
    EvalError::Sandbox(format!("{status:?}: {detail}"))
}

/// Validates each suite against the reference solution.
pub fn validate_suites(
    question_id: &str,
    suites: &[TestSuite],
    gt: &str,
    client: &SandboxClient,
    opts: &ScriptOptions,
) -> Result<Vec<ValidationSummary>, EvalError> {
    if suites.is_empty() {
        return Err(EvalError::EmptyInput("suites"));
    }
    let padded = pad(suites);
    let inputs = TrainingInputs {
        question_id: question_id.to_string(),
        oracle_code: Some(gt.to_string()),
        candidates: vec![gt.to_string()],
        suites: vec![padded.clone()],
        hist: vec![],
        golden: vec![],
    };
    let job = build_training_script(&inputs, opts).map_err(|e| EvalError::Sandbox(e.to_string()))?;
    let (result, report) = client.run_training(&job);
    if report.status != RunStatus::Ok {
        return Err(sandbox_err(result.status, "suite validation"));
    }
    padded
        .iter()
        .enumerate()
        .map(|(n, suite)| {
            let mut v = classify_validation(suite, report.suite(0, n)).map_err(|e| EvalError::Sandbox(e.to_string()))?;
            // Only tests the reference actually passes count as valid.
            for (j, st) in v.statuses.iter_mut().enumerate() {
                if *st == CaseValidation::Valid && report.candidates[0].generated[n][j] != Some(true) {
                    *st = CaseValidation::ExecError;
                }
            }
            let valid = v.statuses.iter().filter(|s| **s == CaseValidation::Valid).count();
            let denom = suites[n].len();
            v.valid_fraction = if denom == 0 { 0.0 } else { valid as f64 / denom as f64 };
            Ok(v)
        })
        .collect()
}

/// Best validity fraction among the suites, in percent.
pub fn pass_at_k(validations: &[ValidationSummary]) -> f64 {
    validations.iter().map(|v| v.valid_fraction * 100.0).fold(0.0, f64::max)
}

fn valid_statements(v: &ValidationSummary) -> Vec<String> {
    v.corrected_suite
        .cases
        .iter()
        .zip(&v.corrected_slots)
        .filter(|(_, &slot)| v.statuses[slot] == CaseValidation::Valid)
        .map(|(case, _)| case.canonical.clone())
        .collect()
}

/// Per-suite kill matrix and the best-of-k mutation score. A mutant is killed
/// by a suite when one of the suite's valid tests fails on it; a mutant whose
/// run exceeds the deadline is killed by every suite with a valid test.
/// Mutants that do not load are left out of the denominator.
pub fn mut_at_k(
    question_id: &str,
    validations: &[ValidationSummary],
    mutants: &mut [Mutant],
    client: &SandboxClient,
    opts: &ScriptOptions,
) -> Result<f64, EvalError> {
    let valid: Vec<Vec<String>> = validations.iter().map(valid_statements).collect();
    if valid.iter().all(Vec::is_empty) || mutants.is_empty() {
        return Ok(0.0);
    }
    let width = valid.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let suites: Vec<TestSuite> = valid
        .iter()
        .map(|stmts| {
            let mut cases: Vec<AssertionCase> = stmts.iter().map(|s| parse_assertion(s)).collect();
            cases.resize_with(width, AssertionCase::placeholder);
            TestSuite::new(cases, SuiteSource::Generated)
        })
        .collect();
    let mut compilable = 0usize;
    let mut killed = vec![0usize; suites.len()];
    for mutant in mutants.iter_mut() {
        mutant.killed_by.clear();
        let inputs = TrainingInputs {
            question_id: question_id.to_string(),
            oracle_code: None,
            candidates: vec![mutant.source.clone()],
            suites: vec![suites.clone()],
            hist: vec![],
            golden: vec![],
        };
        let job = build_training_script(&inputs, opts).map_err(|e| EvalError::Sandbox(e.to_string()))?;
        let (result, report) = client.run_training(&job);
        match report.status {
            RunStatus::Ok => {
                let cand = &report.candidates[0];
                if !cand.code_valid {
                    continue;
                }
                compilable += 1;
                for (n, row) in cand.generated.iter().enumerate() {
                    if row.iter().any(|r| *r == Some(false)) {
                        mutant.killed_by.insert(n);
                    }
                }
            }
            RunStatus::Timeout => {
                compilable += 1;
                mutant.killed_by.extend((0..suites.len()).filter(|&n| !valid[n].is_empty()));
            }
            RunStatus::InfraError => return Err(sandbox_err(result.status, "mutant run")),
        }
        for &n in &mutant.killed_by {
            killed[n] += 1;
        }
    }
    if compilable == 0 {
        return Ok(0.0);
    }
    Ok(killed.iter().map(|&k| k as f64 / compilable as f64 * 100.0).fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Code samples and Best-of-N
// ---------------------------------------------------------------------------

/// Runs each code sample against a `check` harness built from `tests`.
pub fn evaluate_code_samples(
    question_id: &str,
    entry_point: &str,
    tests: &[String],
    samples: &[String],
    client: &SandboxClient,
    opts: &ScriptOptions,
) -> Result<Vec<bool>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput("samples"));
    }
    let inputs = EvalInputs {
        question_id: question_id.to_string(),
        harness_code: harness_from_asserts(entry_point, tests),
        entry_point: entry_point.to_string(),
        candidates: samples.to_vec(),
    };
    let job = build_eval_script(&inputs, opts).map_err(|e| EvalError::Sandbox(e.to_string()))?;
    let (result, report) = client.run_eval(&job);
    if report.status != RunStatus::Ok {
        return Err(sandbox_err(result.status, "code evaluation"));
    }
    Ok(report.outcomes.iter().map(|o| *o == EvalOutcome::Pass).collect())
}

/// Index of the largest count, ties to the lowest index.
pub fn bon_argmax(counts: &[usize]) -> Result<usize, EvalError> {
    let max = *counts.iter().max().ok_or(EvalError::EmptyInput("counts"))?;
    Ok(counts.iter().position(|&c| c == max).unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BonResult {
    pub index: usize,
    /// Distinct canonical assertions each candidate passes.
    pub counts: Vec<usize>,
}

/// Best-of-N: every candidate runs every suite; the candidate passing the
/// most distinct assertions wins. Suites must not be conditioned on any
/// candidate.
pub fn bon_select(
    question_id: &str,
    candidates: &[String],
    suites: &[TestSuite],
    client: &SandboxClient,
    opts: &ScriptOptions,
) -> Result<BonResult, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyInput("candidates"));
    }
    if suites.is_empty() {
        return Err(EvalError::EmptyInput("suites"));
    }
    let padded = pad(suites);
    let inputs = TrainingInputs {
        question_id: question_id.to_string(),
        oracle_code: None,
        candidates: candidates.to_vec(),
        suites: vec![padded; candidates.len()],
        hist: vec![],
        golden: vec![],
    };
    let job = build_training_script(&inputs, opts).map_err(|e| EvalError::Sandbox(e.to_string()))?;
    let (result, report) = client.run_training(&job);
    if report.status != RunStatus::Ok {
        return Err(sandbox_err(result.status, "best-of-n matrix"));
    }
    let counts: Vec<usize> = (0..candidates.len())
        .map(|m| {
            let mut passed = HashSet::new();
            for (n, row) in report.candidates[m].generated.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    if *r != Some(true) {
                        continue;
                    }
                    if let Some(stmt) = &report.suite(m, n).slots[j].corrected {
                        passed.insert(normalize(stmt).unwrap_or_else(|| stmt.clone()));
                    }
                }
            }
            passed.len()
        })
        .collect();
    Ok(BonResult { index: bon_argmax(&counts)?, counts })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub avg_at_k: Option<f64>,
    pub pass_at_k: f64,
    pub mut_at_k: f64,
    pub mul: f64,
    pub config_digest: String,
}

impl MetricReport {
    pub fn new(k: usize, avg_at_k: Option<f64>, pass_at_k: f64, mut_at_k: f64, config_digest: String) -> Self {
        Self { k, avg_at_k, pass_at_k, mut_at_k, mul: mul_score(pass_at_k, mut_at_k), config_digest }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let avg = self.avg_at_k.map(|v| format!("{v:.2}")).unwrap_or_default();
        format!(
            "k,avg_at_k,pass_at_k,mut_at_k,mul,config_digest\n{},{},{:.2},{:.2},{:.2},{}\n",
            self.k, avg, self.pass_at_k, self.mut_at_k, self.mul, self.config_digest
        )
    }
}

/// Mean of per-question reports; the verdict fields are averaged and Mul is
/// recomputed from the averaged pass@k and mut@k.
pub fn aggregate(reports: &[MetricReport]) -> Option<MetricReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let avgs: Vec<f64> = reports.iter().filter_map(|r| r.avg_at_k).collect();
    let avg = (!avgs.is_empty()).then(|| avgs.iter().sum::<f64>() / avgs.len() as f64);
    let pass = reports.iter().map(|r| r.pass_at_k).sum::<f64>() / n;
    let mutk = reports.iter().map(|r| r.mut_at_k).sum::<f64>() / n;
    Some(MetricReport::new(first.k, avg, pass, mutk, first.config_digest.clone()))
}
