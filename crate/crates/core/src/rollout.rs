//! One co-evolution step per question: sample candidates, sample white-box
//! suites per candidate, validate and execute everything in one sandbox job,
//! score both roles, pick tester groups by reward variance, update the
//! Mistake Book and emit trainer records.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::RwLock;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assertion::{extract_code_block, parse_assertion, parse_suite, SuiteSource, TestSuite};
use crate::grpo::{group_advantages, topvar_select, PoolPolicy};
use crate::mistake_book::{MistakeBook, Tallies, UpdateSummary};
use crate::rewards::{
    adversarial_reward, classify_validation, code_reward, test_reward, PassRates, RewardConfig,
};
use crate::sandbox::{ExecStatus, SandboxClient};
use crate::script::{build_training_script, RunStatus, ScriptOptions, TrainingInputs};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub question: String,
    pub ground_truth: String,
    pub entry_point: String,
    pub golden_tests: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Reads line-delimited JSON questions; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(q);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.to_string(), content: content.into() }
    }
}

pub const CODE_SYSTEM_PROMPT: &str = "You are a helpful code completion assistant.";
pub const TEST_SYSTEM_PROMPT: &str = "You are a helpful test case generation assistant.";

pub fn render_code_prompt(q: &Question) -> Vec<Message> {
    let question = &q.question;
    let user = format!(
        "Given the following Question, complete the function. Output the complete function inside ```python ... ``` \
code block, and do not output anything else.\nQuestion:\n{question}"
    );
    vec![Message::new("system", CODE_SYSTEM_PROMPT), Message::new("user", user)]
}

/// Tester prompt for `k` tests. With `candidate = None` the code slot is
/// left empty (black-box generation).
pub fn render_test_prompt(q: &Question, candidate: Option<&str>, k: usize) -> Vec<Message> {
    let question = &q.question;
    let generated_code = candidate.unwrap_or("");
    let user = format!(
        "# Role\n\
You are specializing in finding specific inputs that cause `Buggy Code` to behave differently from the requirements (`Question`).\n\
\n\
# Task\n\
Generate {k} assertion-based test cases to detect bugs for the function in `Buggy Code` according to the `Question`. \n\
\n\
# Strategy\n\
1. Attack Logic Gaps: Analyze where the `Buggy Code` logic might be too simple compared to the `Question`. Construct input `parameters` that hit these blind spots (e.g., missing constraints, misinterpreted rules, over-simplified logic).\n\
2. Prioritize Complexity: Prefer complex input `parameters` (e.g., boundary values, nested loops, compound conditions, rare branches) over simple ones. Ensure every logical branch is stressed and every potential issue is covered.\n\
3. Zero Redundancy: Do not brute-force generating trivial or repetitive tests. Only the first few generated tests will be evaluated, so quality and ordering matter more than quantity.\n\
\n\
# Context\n\
Question:\n\
{question}\n\
\n\
Buggy Code:\n\
```python\n\
{generated_code}\n\
```\n\
\n\
# Output Format\n\
Output ALL the assert statements inside ONE ```python ... ``` code block.\n\
Format: assert function_name(parameters) == answer"
    );
    vec![Message::new("system", TEST_SYSTEM_PROMPT), Message::new("user", user)]
}

/// ChatML rendering ending with an open assistant turn.
pub fn render_chatml(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&format!("<|im_start|>{}\n{}\n<|im_end|>\n", m.role, m.content));
    }
    out.push_str("<|im_start|>assistant");
    out
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub n: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("generation request failed: {0}")]
    Request(String),
    #[error("expected {expected} responses, got {got}")]
    Count { expected: usize, got: usize },
}

/// A generation endpoint. Must return exactly `params.n` texts and tolerate
/// concurrent calls.
pub trait Policy: Send + Sync {
    fn generate(&self, messages: &[Message], params: &SamplingParams) -> Result<Vec<String>, PolicyError>;
}

/// A [`PoolPolicy`] behind a lock, sampling with the per-call seed.
#[derive(Debug)]
pub struct PoolGenerator {
    pool: RwLock<PoolPolicy>,
}

impl PoolGenerator {
    pub fn new(pool: PoolPolicy) -> Self {
        Self { pool: RwLock::new(pool) }
    }

    pub fn snapshot(&self) -> PoolPolicy {
        self.pool.read().unwrap().clone()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.pool.read().unwrap().probabilities()
    }

    /// Score-ascent update of the arm whose text equals `response`.
    pub fn reinforce(&self, response: &str, advantage: f64, lr: f64) -> bool {
        let mut pool = self.pool.write().unwrap();
        match pool.arm_index(response) {
            Some(arm) => {
                pool.update(arm, advantage, lr);
                true
            }
            None => false,
        }
    }
}

impl Policy for PoolGenerator {
    fn generate(&self, _messages: &[Message], params: &SamplingParams) -> Result<Vec<String>, PolicyError> {
        let pool = self.pool.read().unwrap();
        Ok(pool.sample_with_seed(params.n, params.seed).into_iter().map(|(_, t)| t).collect())
    }
}

/// HTTP JSON generation client. The request carries `messages` and the
/// sampling fields; the response is either a JSON array of strings, an object
/// with a `texts` array, or an object with `choices[].message.content`.
pub struct HttpPolicy {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpPolicy {
    pub fn new(url: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(600)).build();
        Self { url: url.into(), token, agent }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    messages: &'a [Message],
    n: usize,
    temperature: f64,
    top_p: f64,
    max_tokens: usize,
    seed: u64,
}

fn texts_from_response(v: serde_json::Value) -> Option<Vec<String>> {
    let strings = |a: &Vec<serde_json::Value>| a.iter().map(|x| x.as_str().map(str::to_string)).collect();
    match v {
        serde_json::Value::Array(a) => strings(&a),
        serde_json::Value::Object(o) => {
            if let Some(serde_json::Value::Array(a)) = o.get("texts") {
                return strings(a);
            }
            let choices = o.get("choices")?.as_array()?;
            choices
                .iter()
                .map(|c| {
                    c.pointer("/message/content").or_else(|| c.get("text")).and_then(|t| t.as_str()).map(str::to_string)
                })
                .collect()
        }
        _ => None,
    }
}

impl Policy for HttpPolicy {
    fn generate(&self, messages: &[Message], params: &SamplingParams) -> Result<Vec<String>, PolicyError> {
        let body = GenerateRequest {
            messages,
            n: params.n,
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            seed: params.seed,
        };
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let resp = req.send_json(&body).map_err(|e| PolicyError::Request(e.to_string()))?;
        let value: serde_json::Value = resp.into_json().map_err(|e| PolicyError::Request(e.to_string()))?;
        let texts = texts_from_response(value).ok_or_else(|| PolicyError::Request("unrecognized response".into()))?;
        if texts.len() != params.n {
            return Err(PolicyError::Count { expected: params.n, got: texts.len() });
        }
        Ok(texts)
    }
}

// ---------------------------------------------------------------------------
// Configuration and records
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("invalid rollout config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub seed: u64,
    /// Historical tests retrieved per question; `None` means `k`.
    pub hist_cap: Option<usize>,
    /// Condition each suite on its candidate's code.
    pub white_box: bool,
    pub timeout_s: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n: 8,
            k: 5,
            ell: 1,
            alpha: 0.5,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 2048,
            seed: 0,
            hist_cap: None,
            white_box: true,
            timeout_s: 10.0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        let err = |s: String| Err(RolloutError::Config(s));
        if self.m == 0 || self.n == 0 || self.k == 0 || self.ell == 0 {
            return err("m, n, k and ell must all be at least 1".into());
        }
        if self.ell * self.n != self.m {
            return err(format!("ell x n must equal m (ell={}, n={}, m={})", self.ell, self.n, self.m));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.temperature > 0.0) || !(self.timeout_s > 0.0) {
            return err("temperature and timeout must be positive".into());
        }
        Ok(())
    }

    pub fn hist_cap(&self) -> usize {
        self.hist_cap.unwrap_or(self.k)
    }

    /// Short hash of the configuration, echoed into every artifact.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..6])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Coder,
    Tester,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub role: Role,
    pub question_id: String,
    pub step: usize,
    /// Candidate index (coder) or owning candidate (tester).
    pub group: usize,
    /// Suite index within the group (tester only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub prompt: Vec<Message>,
    pub response: String,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
    pub config_digest: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub val: f64,
    pub adv: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean_code_reward: f64,
    pub mean_test_reward: Option<f64>,
    pub pass_hist: Option<f64>,
    pub pass_new: Option<f64>,
    pub golden_pass: Option<f64>,
    pub hist_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub question_id: String,
    pub config_digest: String,
    pub run_status: Option<ExecStatus>,
    pub degraded: bool,
    pub anomalies: usize,
    /// Whether candidate m yielded a code block.
    pub extracted: Vec<bool>,
    pub code_rewards: Vec<f64>,
    pub code_advantages: Vec<f64>,
    pub pass_hist: Vec<Option<f64>>,
    pub pass_new: Vec<Option<f64>>,
    /// `[m][n]`; zeros for candidates without code.
    pub test_scores: Vec<Vec<TestScore>>,
    pub selected_groups: Vec<usize>,
    /// One advantage vector per selected group, in `selected_groups` order.
    pub test_advantages: Vec<Vec<f64>>,
    pub book: UpdateSummary,
    pub stats: StepStats,
}

/// Per-step aggregate over all questions, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub mean_code_reward: f64,
    pub mean_test_reward: Option<f64>,
    pub pass_hist: Option<f64>,
    pub pass_new: Option<f64>,
    pub book_added: usize,
    pub book_removed: usize,
}

pub fn summarize_step(step: usize, records: &[StepRecord]) -> StepReport {
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    StepReport {
        step,
        mean_code_reward: mean(records.iter().map(|r| r.stats.mean_code_reward).collect()).unwrap_or(0.0),
        mean_test_reward: mean(records.iter().filter_map(|r| r.stats.mean_test_reward).collect()),
        pass_hist: mean(records.iter().filter_map(|r| r.stats.pass_hist).collect()),
        pass_new: mean(records.iter().filter_map(|r| r.stats.pass_new).collect()),
        book_added: records.iter().map(|r| r.book.added).sum(),
        book_removed: records.iter().map(|r| r.book.removed).sum(),
    }
}

/// Appends records as line-delimited JSON.
pub fn export_batch(records: &[TrainingRecord], path: &Path) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())
}

pub fn read_batch(path: &Path) -> std::io::Result<Vec<TrainingRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

/// Per-call sampling seed, independent of scheduling order.
pub fn derive_seed(seed: u64, step: usize, question_id: &str, role: Role, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((step as u64).to_le_bytes());
    h.update((question_id.len() as u64).to_le_bytes());
    h.update(question_id.as_bytes());
    h.update([role as u8]);
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

// ---------------------------------------------------------------------------
// The step
// ---------------------------------------------------------------------------

pub struct StepOutput {
    pub records: Vec<StepRecord>,
    pub batch: Vec<TrainingRecord>,
}

struct QuestionOutcome {
    record: StepRecord,
    batch: Vec<TrainingRecord>,
    tallies: Option<Tallies>,
}

/// Runs one step over `questions`. Questions are processed in parallel; the
/// book is read at step start and updated afterwards in question order.
pub fn run_step(
    step: usize,
    questions: &[Question],
    code_policy: &dyn Policy,
    test_policy: &dyn Policy,
    book: &mut MistakeBook,
    cfg: &RolloutConfig,
    client: &SandboxClient,
) -> Result<StepOutput, RolloutError> {
    cfg.validate()?;
    let snapshot: &MistakeBook = book;
    let outcomes: Vec<QuestionOutcome> = questions
        .par_iter()
        .map(|q| rollout_question(step, q, code_policy, test_policy, snapshot, cfg, client))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut batch = Vec::new();
    for mut o in outcomes {
        if let Some(t) = &o.tallies {
            o.record.book = book.apply_step_update(&o.record.question_id, t);
        }
        records.push(o.record);
        batch.extend(o.batch);
    }
    Ok(StepOutput { records, batch })
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn rollout_question(
    step: usize,
    q: &Question,
    code_policy: &dyn Policy,
    test_policy: &dyn Policy,
    book: &MistakeBook,
    cfg: &RolloutConfig,
    client: &SandboxClient,
) -> QuestionOutcome {
    let (m_count, n_count, k) = (cfg.m, cfg.n, cfg.k);
    let digest = cfg.digest();
    let rcfg = RewardConfig { alpha: cfg.alpha };
    let params = |n: usize, role: Role, index: usize| SamplingParams {
        n,
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        max_tokens: cfg.max_tokens,
        seed: derive_seed(cfg.seed, step, &q.question_id, role, index),
    };
    let mut record = StepRecord {
        step,
        question_id: q.question_id.clone(),
        config_digest: digest.clone(),
        run_status: None,
        degraded: true,
        anomalies: 0,
        extracted: vec![false; m_count],
        code_rewards: vec![0.0; m_count],
        code_advantages: vec![0.0; m_count],
        pass_hist: vec![None; m_count],
        pass_new: vec![None; m_count],
        test_scores: vec![vec![TestScore::default(); n_count]; m_count],
        selected_groups: vec![],
        test_advantages: vec![],
        book: UpdateSummary::default(),
        stats: StepStats::default(),
    };

    // Step 1: candidates.
    let code_prompt = render_code_prompt(q);
    let responses = match code_policy.generate(&code_prompt, &params(m_count, Role::Coder, 0)) {
        Ok(r) if r.len() == m_count => r,
        _ => return QuestionOutcome { record, batch: vec![], tallies: None },
    };
    let codes: Vec<Option<String>> = responses.iter().map(|r| extract_code_block(r).ok()).collect();
    record.extracted = codes.iter().map(Option::is_some).collect();

    // Historical tests, fixed for the whole step.
    let hist = book.retrieve(&q.question_id, cfg.hist_cap());
    record.stats.hist_size = hist.len();

    // Step 2: white-box suites per candidate.
    let mut degraded = false;
    let mut test_prompts = Vec::with_capacity(m_count);
    let mut test_responses = Vec::with_capacity(m_count);
    let mut suites: Vec<Vec<TestSuite>> = Vec::with_capacity(m_count);
    for (m, code) in codes.iter().enumerate() {
        let prompt = render_test_prompt(q, if cfg.white_box { code.as_deref() } else { None }, k);
        let texts = match code {
            None => vec![String::new(); n_count],
            Some(_) => match test_policy.generate(&prompt, &params(n_count, Role::Tester, m)) {
                Ok(t) if t.len() == n_count => t,
                _ => {
                    degraded = true;
                    vec![String::new(); n_count]
                }
            },
        };
        let row = texts
            .iter()
            .map(|t| match extract_code_block(t) {
                Ok(block) if code.is_some() => parse_suite(&block, k).with_owner(m),
                _ => TestSuite::empty(k, SuiteSource::Generated).with_owner(m),
            })
            .collect();
        suites.push(row);
        test_prompts.push(prompt);
        test_responses.push(texts);
    }

    // Steps 3 and 4: one calibrate-then-evaluate job.
    let golden = q.golden_tests.iter().map(|t| parse_assertion(t)).collect();
    let inputs = TrainingInputs {
        question_id: q.question_id.clone(),
        oracle_code: Some(q.ground_truth.clone()),
        candidates: codes.iter().map(|c| c.clone().unwrap_or_default()).collect(),
        suites,
        hist,
        golden,
    };
    let opts = ScriptOptions { timeout_s: cfg.timeout_s, ..Default::default() };
    let report = match build_training_script(&inputs, &opts) {
        Ok(job) => {
            let (result, report) = client.run_training(&job);
            record.run_status = Some(result.status);
            Some(report)
        }
        Err(_) => None,
    };
    let report = report.filter(|r| r.status == RunStatus::Ok);
    degraded |= report.is_none();
    record.degraded = degraded;
    let eligible: Vec<usize> = (0..m_count).filter(|&m| record.extracted[m]).collect();

    let known: std::collections::HashSet<&str> =
        book.entries(&q.question_id).iter().map(|e| e.testcase.as_str()).collect();
    let mut tallies: Tallies = Tallies::new();
    if let Some(report) = &report {
        record.anomalies = report.anomalies.len();
        for &m in &eligible {
            let cand = &report.candidates[m];
            let rates = PassRates::from_candidate(cand);
            record.pass_hist[m] = rates.pass_hist;
            record.pass_new[m] = rates.mean_pass_new();
            record.code_rewards[m] = code_reward(&rates).unwrap_or(0.0);
            for n in 0..n_count {
                let suite = &inputs.suites[m][n];
                let val = classify_validation(suite, report.suite(m, n)).map(|v| v.valid_fraction).unwrap_or(0.0);
                let adv = adversarial_reward(rates.pass_hist, rates.pass_new_per_suite[n]);
                record.test_scores[m][n] = TestScore { val, adv, total: test_reward(val, adv, &rcfg) };
            }
            for (i, case) in inputs.hist.iter().enumerate() {
                let e = tallies.entry(case.canonical.clone()).or_default();
                if cand.hist[i] {
                    e.1 += 1;
                } else {
                    e.0 += 1;
                }
            }
            for n in 0..n_count {
                let suite_report = report.suite(m, n);
                for (j, slot) in suite_report.slots.iter().enumerate() {
                    let (Some(text), Some(pass)) = (&slot.corrected, cand.generated[n][j]) else { continue };
                    let key = crate::assertion::normalize(text).unwrap_or_else(|| text.clone());
                    // A pass only counts against a test already in the book.
                    if !pass {
                        tallies.entry(key).or_default().0 += 1;
                    } else if known.contains(key.as_str()) {
                        tallies.entry(key).or_default().1 += 1;
                    }
                }
            }
        }
        record.stats.golden_pass = mean_of(
            eligible.iter().flat_map(|&m| report.candidates[m].golden.iter().map(|&b| if b { 1.0 } else { 0.0 })),
        );
    }

    record.code_advantages = group_advantages(&record.code_rewards).map(|g| g.advantages).unwrap_or_default();
    let rows: Vec<Vec<f64>> =
        eligible.iter().map(|&m| record.test_scores[m].iter().map(|s| s.total).collect()).collect();
    if !rows.is_empty() {
        let ell = cfg.ell.min(rows.len());
        let picked = topvar_select(&rows, ell).unwrap_or_default();
        for p in picked {
            record.selected_groups.push(eligible[p]);
            record.test_advantages.push(group_advantages(&rows[p]).map(|g| g.advantages).unwrap_or_default());
        }
    }

    record.stats.mean_code_reward = mean_of(record.code_rewards.iter().copied()).unwrap_or(0.0);
    record.stats.mean_test_reward =
        mean_of(eligible.iter().flat_map(|&m| record.test_scores[m].iter().map(|s| s.total)));
    record.stats.pass_hist = mean_of(eligible.iter().filter_map(|&m| record.pass_hist[m]));
    record.stats.pass_new = mean_of(eligible.iter().filter_map(|&m| record.pass_new[m]));

    let mut batch = Vec::with_capacity(m_count + cfg.ell * n_count);
    for (m, response) in responses.into_iter().enumerate() {
        batch.push(TrainingRecord {
            role: Role::Coder,
            question_id: q.question_id.clone(),
            step,
            group: m,
            index: None,
            prompt: code_prompt.clone(),
            response,
            reward: record.code_rewards[m],
            advantage: Some(record.code_advantages[m]),
            config_digest: digest.clone(),
        });
    }
    for (g, &m) in record.selected_groups.iter().enumerate() {
        for n in 0..n_count {
            batch.push(TrainingRecord {
                role: Role::Tester,
                question_id: q.question_id.clone(),
                step,
                group: m,
                index: Some(n),
                prompt: test_prompts[m].clone(),
                response: test_responses[m][n].clone(),
                reward: record.test_scores[m][n].total,
                advantage: record.test_advantages[g].get(n).copied(),
                config_digest: digest.clone(),
            });
        }
    }
    let tallies = report.is_some().then_some(tallies);
    QuestionOutcome { record, batch, tallies }
}

/// Applies exported advantages to pool policies: each record moves the arm
/// whose text equals its response.
pub struct PoolLearner<'a> {
    pub coder: &'a PoolGenerator,
    pub tester: &'a PoolGenerator,
    pub lr: f64,
}

impl PoolLearner<'_> {
    pub fn apply(&self, batch: &[TrainingRecord]) {
        for r in batch {
            let Some(adv) = r.advantage else { continue };
            let pool = match r.role {
                Role::Coder => self.coder,
                Role::Tester => self.tester,
            };
            pool.reinforce(&r.response, adv, self.lr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Question {
        Question {
            question_id: "q".into(),
            question: "def f(x):\n    \"\"\"Add one.\"\"\"".into(),
            ground_truth: "def f(x):\n    return x + 1".into(),
            entry_point: "f".into(),
            golden_tests: vec![],
        }
    }

    #[test]
    fn config_requires_balanced_sampling() {
        assert!(RolloutConfig::default().validate().is_ok());
        let bad = RolloutConfig { n: 4, ..Default::default() };
        assert!(matches!(bad.validate(), Err(RolloutError::Config(_))));
        let ok = RolloutConfig { n: 4, ell: 2, ..Default::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn code_prompt_layout() {
        let text = render_chatml(&render_code_prompt(&q()));
        assert_eq!(
            text,
            "<|im_start|>system\nYou are a helpful code completion assistant.\n<|im_end|>\n<|im_start|>user\n\
Given the following Question, complete the function. Output the complete function inside ```python ... ``` code \
block, and do not output anything else.\nQuestion:\ndef f(x):\n    \"\"\"Add one.\"\"\"\n<|im_end|>\n<|im_start|>assistant"
        );
    }

    #[test]
    fn test_prompt_parametrizes_count_and_code() {
        let p = render_test_prompt(&q(), Some("def f(x): return x"), 5);
        let user = &p[1].content;
        assert!(user.contains("Generate 5 assertion-based test cases"));
        assert!(user.contains("according to the `Question`. \n\n# Strategy"));
        assert!(user.contains("Buggy Code:\n```python\ndef f(x): return x\n```\n\n# Output Format"));
        let blind = render_test_prompt(&q(), None, 8);
        assert!(blind[1].content.contains("Buggy Code:\n```python\n\n```\n"));
    }

    #[test]
    fn seeds_differ_by_role_and_index() {
        let a = derive_seed(1, 0, "q", Role::Coder, 0);
        assert_ne!(a, derive_seed(1, 0, "q", Role::Tester, 0));
        assert_ne!(a, derive_seed(1, 1, "q", Role::Coder, 0));
        assert_eq!(a, derive_seed(1, 0, "q", Role::Coder, 0));
    }

    #[test]
    fn response_shapes_are_recognized() {
        let v = serde_json::json!(["a", "b"]);
        assert_eq!(texts_from_response(v).unwrap(), vec!["a", "b"]);
        let v = serde_json::json!({"texts": ["a"]});
        assert_eq!(texts_from_response(v).unwrap(), vec!["a"]);
        let v = serde_json::json!({"choices": [{"message": {"content": "x"}}, {"text": "y"}]});
        assert_eq!(texts_from_response(v).unwrap(), vec!["x", "y"]);
    }
}
