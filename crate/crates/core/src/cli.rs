//! Command-line surface: training runs, dynamics reports, Best-of-N,
//! evaluation metrics and Mistake Book inspection.
//!
//! Settings resolve as flags, then the TOML file given by `--config`, then
//! built-in defaults.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{extract_code_block, parse_suite, TestSuite};
use crate::evalkit::{
    aggregate, avg_at_k, bon_select, evaluate_code_samples, generate_mutants, mut_at_k, pass_at_k, validate_suites,
    EvalError, MetricReport,
};
use crate::fixtures;
use crate::mistake_book::{BookError, MistakeBook};
use crate::rollout::{
    derive_seed, export_batch, load_dataset, render_code_prompt, render_test_prompt, run_step, summarize_step,
    DatasetError, HttpPolicy, Policy, PolicyError, PoolGenerator, PoolLearner, Question, Role, RolloutConfig,
    RolloutError, SamplingParams, StepRecord, StepReport,
};
use crate::sandbox::{
    Backend, ConfigError, LocalBackend, RemoteBackend, SandboxClient, SimulatedBackend, SupervisionConfig,
};
use crate::script::ScriptOptions;

pub const CODE_TOKEN_ENV: &str = "COEVOLVE_CODE_TOKEN";
pub const TEST_TOKEN_ENV: &str = "COEVOLVE_TEST_TOKEN";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Sandbox(#[from] ConfigError),
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for bad invocations and unreadable inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Dataset(_) | CliError::Rollout(_) | CliError::Sandbox(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Simulated,
    Remote,
    Local,
}

#[derive(Debug, Parser)]
#[command(name = "coevolve", version, about = "Adversarial code/test co-evolution harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run training steps and export rewards, advantages and reports.
    Train(TrainArgs),
    /// Rebuild the per-step CSV from a step-record log.
    Report(ReportArgs),
    /// Best-of-N selection with candidate-blind test suites.
    Bon(BonArgs),
    /// avg@k, pass@k, mut@k and Mul.
    Eval(EvalArgs),
    /// Mistake Book utilities.
    #[command(subcommand)]
    Book(BookCommand),
    /// Bundled corpus utilities.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Debug, Subcommand)]
pub enum BookCommand {
    /// Print a book, most frequent tests first.
    Inspect { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Write the threeSum dataset and the example book into a directory.
    Write { dir: PathBuf },
}

/// Flags shared by every command that talks to policies or a sandbox.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub sandbox_url: Option<String>,
    /// Generation endpoint for code; the bundled pool is used when absent.
    #[arg(long)]
    pub code_endpoint: Option<String>,
    #[arg(long)]
    pub test_endpoint: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub book: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub ell: Option<usize>,
    /// Learning rate of the bundled pool policies.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// `steps.jsonl` written by `train`.
    pub records: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BonArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Candidate solutions per question.
    #[arg(long)]
    pub m: Option<usize>,
    /// Candidate-blind suites per question.
    #[arg(long)]
    pub n: Option<usize>,
    /// Tests per suite.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Suites sampled per question for pass@k and mut@k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Code samples per question for avg@k.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Tests per suite.
    #[arg(long)]
    pub tests: Option<usize>,
    /// Mutants per question.
    #[arg(long)]
    pub mutants: Option<usize>,
}

/// Optional keys accepted in the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub book: Option<PathBuf>,
    pub steps: Option<usize>,
    pub alpha: Option<f64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub ell: Option<usize>,
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub sandbox_url: Option<String>,
    pub code_endpoint: Option<String>,
    pub test_endpoint: Option<String>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub lr: Option<f64>,
    pub timeout: Option<f64>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<usize>,
    pub hist_cap: Option<usize>,
    pub white_box: Option<bool>,
    pub samples: Option<usize>,
    pub tests: Option<usize>,
    pub mutants: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Everything a training run depends on. Under the simulated backend the
/// manifest fully determines the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RolloutConfig,
    pub config_digest: String,
    pub dataset: PathBuf,
    pub book: PathBuf,
    pub backend: BackendKind,
    pub sandbox_url: Option<String>,
    pub code_endpoint: Option<String>,
    pub test_endpoint: Option<String>,
    pub steps: usize,
    pub lr: f64,
    pub out: PathBuf,
    pub report: PathBuf,
}

impl RunManifest {
    pub fn resolve(args: &TrainArgs) -> Result<Self, CliError> {
        let file = FileConfig::load(args.common.config.as_deref())?;
        let c = &args.common;
        let d = RolloutConfig::default();
        let config = RolloutConfig {
            m: args.m.or(file.m).unwrap_or(d.m),
            n: args.n.or(file.n).unwrap_or(d.n),
            k: args.k.or(file.k).unwrap_or(d.k),
            ell: args.ell.or(file.ell).unwrap_or(d.ell),
            alpha: args.alpha.or(file.alpha).unwrap_or(d.alpha),
            temperature: file.temperature.unwrap_or(d.temperature),
            top_p: file.top_p.unwrap_or(d.top_p),
            max_tokens: file.max_tokens.unwrap_or(d.max_tokens),
            seed: c.seed.or(file.seed).unwrap_or(d.seed),
            hist_cap: file.hist_cap.or(d.hist_cap),
            white_box: file.white_box.unwrap_or(d.white_box),
            timeout_s: c.timeout.or(file.timeout).unwrap_or(d.timeout_s),
        };
        config.validate()?;
        let dataset = c
            .dataset
            .clone()
            .or(file.dataset)
            .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
        let out = c.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("runs/latest"));
        let book = args.book.clone().or(file.book).unwrap_or_else(|| out.join("mistake_book.json"));
        let report = args.report.clone().or(file.report).unwrap_or_else(|| out.join("report.csv"));
        let lr = args.lr.or(file.lr).unwrap_or(0.1);
        if !(lr > 0.0) {
            return Err(CliError::Usage(format!("--lr must be positive, got {lr}")));
        }
        Ok(Self {
            config_digest: config.digest(),
            config,
            dataset,
            book,
            backend: c.backend.or(file.backend).unwrap_or_default(),
            sandbox_url: c.sandbox_url.clone().or(file.sandbox_url),
            code_endpoint: c.code_endpoint.clone().or(file.code_endpoint),
            test_endpoint: c.test_endpoint.clone().or(file.test_endpoint),
            steps: args.steps.or(file.steps).unwrap_or(1),
            lr,
            out,
            report,
        })
    }
}

pub fn build_client(
    kind: BackendKind,
    sandbox_url: Option<&str>,
    timeout_s: f64,
) -> Result<SandboxClient, CliError> {
    let backend: Arc<dyn Backend> = match kind {
        BackendKind::Simulated => Arc::new(SimulatedBackend::new(fixtures::truth_table())),
        BackendKind::Remote => {
            let url = sandbox_url.ok_or_else(|| CliError::Usage("--sandbox-url is required for --backend remote".into()))?;
            Arc::new(RemoteBackend::new(url))
        }
        BackendKind::Local => {
            let local = LocalBackend::python3();
            if !local.available() {
                return Err(ConfigError::MissingBackend("python3 not found on PATH".into()).into());
            }
            Arc::new(local)
        }
    };
    let cfg = SupervisionConfig { timeout_s, ..SupervisionConfig::default() };
    Ok(SandboxClient::new(backend, cfg)?)
}

/// A generation policy: an HTTP endpoint, or the bundled pool that can learn.
pub enum PolicyHandle {
    Http(HttpPolicy),
    Pool(PoolGenerator),
}

impl PolicyHandle {
    fn new(endpoint: Option<&str>, token_env: &str, pool: impl FnOnce() -> PoolGenerator) -> Self {
        match endpoint {
            Some(url) => PolicyHandle::Http(HttpPolicy::new(url, std::env::var(token_env).ok())),
            None => PolicyHandle::Pool(pool()),
        }
    }

    pub fn policy(&self) -> &dyn Policy {
        match self {
            PolicyHandle::Http(p) => p,
            PolicyHandle::Pool(p) => p,
        }
    }

    pub fn pool(&self) -> Option<&PoolGenerator> {
        match self {
            PolicyHandle::Pool(p) => Some(p),
            PolicyHandle::Http(_) => None,
        }
    }
}

pub const CSV_HEADER: &str = "step,mean_R_C,mean_R_T,pass_hist,pass_new,book_added,book_removed,config_digest";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn csv_row(r: &StepReport, digest: &str) -> String {
    format!(
        "{},{:.6},{},{},{},{},{},{}",
        r.step,
        r.mean_code_reward,
        opt(r.mean_test_reward),
        opt(r.pass_hist),
        opt(r.pass_new),
        r.book_added,
        r.book_removed,
        digest
    )
}

/// Per-step CSV from step reports; header only when there are none.
pub fn render_csv(reports: &[StepReport], digest: &str) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r, digest));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: Vec<StepReport>,
    pub degraded_questions: usize,
    pub final_code_probs: Option<Vec<f64>>,
    pub final_test_probs: Option<Vec<f64>>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(io_err(path))
}

fn load_questions(path: &Path) -> Result<Vec<Question>, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset not found: {}", path.display())));
    }
    let qs = load_dataset(path)?;
    if qs.is_empty() {
        return Err(CliError::Usage(format!("dataset is empty: {}", path.display())));
    }
    Ok(qs)
}

/// Runs the configured steps. Writes `manifest.json`, `steps.jsonl`,
/// `batch.jsonl`, the CSV report and the book (after every step).
pub fn cmd_train(manifest: &RunManifest) -> Result<TrainSummary, CliError> {
    let questions = load_questions(&manifest.dataset)?;
    let cfg = &manifest.config;
    let client = build_client(manifest.backend, manifest.sandbox_url.as_deref(), cfg.timeout_s)?;
    let _supervisor = (manifest.backend == BackendKind::Remote).then(|| client.spawn_supervisor());
    let code = PolicyHandle::new(manifest.code_endpoint.as_deref(), CODE_TOKEN_ENV, || {
        PoolGenerator::new(fixtures::code_pool(cfg.temperature, cfg.seed))
    });
    let test = PolicyHandle::new(manifest.test_endpoint.as_deref(), TEST_TOKEN_ENV, || {
        PoolGenerator::new(fixtures::test_pool(cfg.temperature, cfg.seed))
    });
    let mut book = if manifest.book.exists() { MistakeBook::load(&manifest.book)? } else { MistakeBook::new() };

    fs::create_dir_all(&manifest.out).map_err(io_err(&manifest.out))?;
    write_json(&manifest.out.join("manifest.json"), manifest)?;
    let steps_path = manifest.out.join("steps.jsonl");
    let batch_path = manifest.out.join("batch.jsonl");
    for p in [&steps_path, &batch_path] {
        fs::write(p, "").map_err(io_err(p))?;
    }

    let mut reports = Vec::with_capacity(manifest.steps);
    let mut degraded = 0;
    for step in 0..manifest.steps {
        let out = run_step(step, &questions, code.policy(), test.policy(), &mut book, cfg, &client)?;
        degraded += out.records.iter().filter(|r| r.degraded).count();
        if let (Some(coder), Some(tester)) = (code.pool(), test.pool()) {
            PoolLearner { coder, tester, lr: manifest.lr }.apply(&out.batch);
        }
        let mut lines = String::new();
        for r in &out.records {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        append(&steps_path, &lines)?;
        export_batch(&out.batch, &batch_path).map_err(io_err(&batch_path))?;
        book.save(&manifest.book)?;
        reports.push(summarize_step(step, &out.records));
    }
    if let Some(parent) = manifest.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&manifest.report, render_csv(&reports, &manifest.config_digest)).map_err(io_err(&manifest.report))?;
    let summary = TrainSummary {
        steps: reports,
        degraded_questions: degraded,
        final_code_probs: code.pool().map(PoolGenerator::probabilities),
        final_test_probs: test.pool().map(PoolGenerator::probabilities),
    };
    write_json(&manifest.out.join("summary.json"), &serde_json::json!({
        "config_digest": manifest.config_digest,
        "summary": summary,
    }))?;
    Ok(summary)
}

fn append(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = fs::OpenOptions::new().append(true).create(true).open(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Groups step records by step and renders the CSV.
pub fn cmd_report(args: &ReportArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&args.records).map_err(io_err(&args.records))?;
    let mut records: Vec<StepRecord> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("{} line {}: {e}", args.records.display(), i + 1)))?;
        records.push(r);
    }
    let digest = records.first().map(|r| r.config_digest.clone()).unwrap_or_default();
    let mut steps: Vec<usize> = records.iter().map(|r| r.step).collect();
    steps.dedup();
    let reports: Vec<StepReport> = steps
        .iter()
        .map(|&s| {
            let group: Vec<StepRecord> = records.iter().filter(|r| r.step == s).cloned().collect();
            summarize_step(s, &group)
        })
        .collect();
    let csv = render_csv(&reports, &digest);
    if let Some(out) = &args.out {
        fs::write(out, &csv).map_err(io_err(out))?;
    }
    Ok(csv)
}

struct EvalSetup {
    questions: Vec<Question>,
    client: SandboxClient,
    code: PolicyHandle,
    test: PolicyHandle,
    seed: u64,
    opts: ScriptOptions,
    out: Option<PathBuf>,
    file: FileConfig,
}

/// Sampling settings for evaluation-time generation.
pub const EVAL_TEMPERATURE: f64 = 0.7;
pub const EVAL_TOP_P: f64 = 0.95;

fn eval_setup(c: &CommonArgs) -> Result<EvalSetup, CliError> {
    let file = FileConfig::load(c.config.as_deref())?;
    let dataset =
        c.dataset.clone().or(file.dataset.clone()).ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let questions = load_questions(&dataset)?;
    let timeout = c.timeout.or(file.timeout).unwrap_or(10.0);
    let backend = c.backend.or(file.backend).unwrap_or_default();
    let url = c.sandbox_url.clone().or(file.sandbox_url.clone());
    let client = build_client(backend, url.as_deref(), timeout)?;
    let seed = c.seed.or(file.seed).unwrap_or(0);
    let code_ep = c.code_endpoint.clone().or(file.code_endpoint.clone());
    let test_ep = c.test_endpoint.clone().or(file.test_endpoint.clone());
    Ok(EvalSetup {
        questions,
        client,
        code: PolicyHandle::new(code_ep.as_deref(), CODE_TOKEN_ENV, || {
            PoolGenerator::new(fixtures::code_pool(EVAL_TEMPERATURE, seed))
        }),
        test: PolicyHandle::new(test_ep.as_deref(), TEST_TOKEN_ENV, || {
            PoolGenerator::new(fixtures::test_pool(EVAL_TEMPERATURE, seed))
        }),
        seed,
        opts: ScriptOptions { timeout_s: timeout, ..Default::default() },
        out: c.out.clone().or(file.out.clone()),
        file,
    })
}

fn sample(policy: &dyn Policy, prompt: &[crate::rollout::Message], n: usize, seed: u64) -> Result<Vec<String>, CliError> {
    let params = SamplingParams { n, temperature: EVAL_TEMPERATURE, top_p: EVAL_TOP_P, max_tokens: 2048, seed };
    let texts = policy.generate(prompt, &params)?;
    if texts.len() != n {
        return Err(PolicyError::Count { expected: n, got: texts.len() }.into());
    }
    Ok(texts)
}

fn suites_from(texts: &[String], k: usize) -> Vec<TestSuite> {
    texts
        .iter()
        .map(|t| match extract_code_block(t) {
            Ok(block) => parse_suite(&block, k),
            Err(_) => TestSuite::empty(k, crate::assertion::SuiteSource::Generated),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonOutcome {
    pub question_id: String,
    pub chosen: usize,
    pub counts: Vec<usize>,
    /// Whether the chosen candidate passes the golden tests.
    pub chosen_passes_golden: bool,
}

/// Best-of-N over the dataset. Defaults: 16 candidates, 16 suites.
pub fn cmd_bon(args: &BonArgs) -> Result<Vec<BonOutcome>, CliError> {
    let s = eval_setup(&args.common)?;
    let m = args.m.unwrap_or(16);
    let n = args.n.unwrap_or(16);
    let k = args.k.or(s.file.k).unwrap_or(5);
    if m == 0 || n == 0 || k == 0 {
        return Err(CliError::Usage("--m, --n and --k must be at least 1".into()));
    }
    let mut outcomes = Vec::new();
    for q in &s.questions {
        let responses =
            sample(s.code.policy(), &render_code_prompt(q), m, derive_seed(s.seed, 0, &q.question_id, Role::Coder, 0))?;
        let codes: Vec<String> = responses.iter().map(|r| extract_code_block(r).unwrap_or_default()).collect();
        let tests = sample(
            s.test.policy(),
            &render_test_prompt(q, None, k),
            n,
            derive_seed(s.seed, 0, &q.question_id, Role::Tester, 0),
        )?;
        let r = bon_select(&q.question_id, &codes, &suites_from(&tests, k), &s.client, &s.opts)?;
        let golden = evaluate_code_samples(
            &q.question_id,
            &q.entry_point,
            &q.golden_tests,
            &codes[r.index..=r.index],
            &s.client,
            &s.opts,
        )?;
        outcomes.push(BonOutcome {
            question_id: q.question_id.clone(),
            chosen: r.index,
            counts: r.counts,
            chosen_passes_golden: golden[0],
        });
    }
    if let Some(out) = &s.out {
        fs::create_dir_all(out).map_err(io_err(out))?;
        write_json(&out.join("bon.json"), &outcomes)?;
    }
    Ok(outcomes)
}

/// Per-question and aggregate metrics.
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricReport, CliError> {
    let s = eval_setup(&args.common)?;
    let k = args.k.unwrap_or(5);
    let samples = args.samples.or(s.file.samples).unwrap_or(32);
    let tests = args.tests.or(s.file.tests).unwrap_or(5);
    let limit = args.mutants.or(s.file.mutants).unwrap_or(20);
    if k == 0 || samples == 0 || tests == 0 {
        return Err(CliError::Usage("--k, --samples and --tests must be at least 1".into()));
    }
    let settings = serde_json::json!({"k": k, "samples": samples, "tests": tests, "mutants": limit, "seed": s.seed});
    let digest = hex_digest(&settings.to_string());
    let mut per_question = Vec::new();
    for q in &s.questions {
        let responses = sample(
            s.code.policy(),
            &render_code_prompt(q),
            samples,
            derive_seed(s.seed, 0, &q.question_id, Role::Coder, 0),
        )?;
        let codes: Vec<String> = responses.iter().map(|r| extract_code_block(r).unwrap_or_default()).collect();
        let passed = evaluate_code_samples(&q.question_id, &q.entry_point, &q.golden_tests, &codes, &s.client, &s.opts)?;
        let avg = avg_at_k(&passed, samples)?;

        let texts = sample(
            s.test.policy(),
            &render_test_prompt(q, Some(&q.ground_truth), tests),
            k,
            derive_seed(s.seed, 0, &q.question_id, Role::Tester, 0),
        )?;
        let suites = suites_from(&texts, tests);
        let validations = validate_suites(&q.question_id, &suites, &q.ground_truth, &s.client, &s.opts)?;
        let pass = pass_at_k(&validations);
        let mut mutants = match generate_mutants(&q.ground_truth, limit, s.seed) {
            Ok(m) => m,
            Err(EvalError::NoSites) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mutk = mut_at_k(&q.question_id, &validations, &mut mutants, &s.client, &s.opts)?;
        per_question.push(MetricReport::new(k, Some(avg), pass, mutk, digest.clone()));
    }
    let report = aggregate(&per_question).expect("dataset is non-empty");
    if let Some(out) = &s.out {
        fs::create_dir_all(out).map_err(io_err(out))?;
        fs::write(out.join("metrics.json"), report.to_json() + "\n").map_err(io_err(out))?;
        fs::write(out.join("metrics.csv"), report.to_csv()).map_err(io_err(out))?;
    }
    Ok(report)
}

fn hex_digest(s: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(s.as_bytes())[..6])
}

pub fn cmd_book_inspect(path: &Path) -> Result<String, CliError> {
    Ok(MistakeBook::load(path)?.inspect())
}

pub fn cmd_fixture_write(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = [
        ("three_sum.jsonl", fixtures::dataset_jsonl()),
        ("mistake_book_example.json", fixtures::MISTAKE_BOOK_EXAMPLE.to_string()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}

/// Dispatches a parsed command line and prints results to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let manifest = RunManifest::resolve(&args)?;
            let summary = cmd_train(&manifest)?;
            println!(
                "{} step(s), {} degraded question-step(s); report {}",
                summary.steps.len(),
                summary.degraded_questions,
                manifest.report.display()
            );
        }
        Command::Report(args) => print!("{}", cmd_report(&args)?),
        Command::Bon(args) => {
            for o in cmd_bon(&args)? {
                println!("{}", serde_json::to_string(&o).expect("serializable"));
            }
        }
        Command::Eval(args) => print!("{}", cmd_eval(&args)?.to_json() + "\n"),
        Command::Book(BookCommand::Inspect { path }) => print!("{}", cmd_book_inspect(&path)?),
        Command::Fixture(FixtureCommand::Write { dir }) => {
            for p in cmd_fixture_write(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
