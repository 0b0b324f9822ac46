use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use coevolve::cli::{cmd_bon, BackendKind, BonArgs, Cli, Command as Sub, CommonArgs, RunManifest, CSV_HEADER};
use coevolve::fixtures;
use coevolve::mistake_book::{MistakeBook, Tallies};
use coevolve::rollout::StepRecord;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevolve")).args(args).output().expect("binary runs")
}

fn dataset(dir: &Path) -> PathBuf {
    let p = dir.join("three_sum.jsonl");
    fs::write(&p, fixtures::dataset_jsonl()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(argv: &[&str]) -> Result<RunManifest, coevolve::cli::CliError> {
    let cli = Cli::try_parse_from(argv).unwrap();
    let Sub::Train(args) = cli.command else { panic!("not a train command") };
    RunManifest::resolve(&args)
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    fs::write(&toml, "dataset = \"from_file.jsonl\"\nm = 4\nn = 2\nell = 2\nalpha = 0.3\nseed = 9\nsteps = 7\n").unwrap();
    let m = manifest(&["coevolve", "train", "--config", s(&toml), "--m", "6", "--n", "3", "--seed", "1"]).unwrap();
    assert_eq!((m.config.m, m.config.n, m.config.ell), (6, 3, 2));
    assert_eq!(m.config.alpha, 0.3);
    assert_eq!(m.config.seed, 1);
    assert_eq!(m.steps, 7);
    assert_eq!(m.config.k, 5);
    assert_eq!(m.lr, 0.1);
    assert_eq!(m.dataset, PathBuf::from("from_file.jsonl"));
    assert_eq!(m.backend, BackendKind::Simulated);
    assert_eq!(m.report, PathBuf::from("runs/latest/report.csv"));
}

#[test]
fn defaults_apply_without_a_file() {
    let m = manifest(&["coevolve", "train", "--dataset", "d.jsonl"]).unwrap();
    assert_eq!((m.config.m, m.config.n, m.config.k, m.config.ell), (8, 8, 5, 1));
    assert_eq!((m.config.alpha, m.config.temperature, m.config.top_p), (0.5, 1.0, 1.0));
    assert_eq!(m.config.max_tokens, 2048);
    assert_eq!(m.config.timeout_s, 10.0);
    assert_eq!(m.steps, 1);
}

#[test]
fn bad_settings_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    fs::write(&toml, "dataset = \"d.jsonl\"\nbogus = 1\n").unwrap();
    assert_eq!(manifest(&["coevolve", "train", "--config", s(&toml)]).unwrap_err().exit_code(), 2);
    assert_eq!(manifest(&["coevolve", "train", "--dataset", "d", "--alpha", "1.5"]).unwrap_err().exit_code(), 2);
    assert_eq!(manifest(&["coevolve", "train", "--dataset", "d", "--m", "5"]).unwrap_err().exit_code(), 2);
    assert_eq!(manifest(&["coevolve", "train"]).unwrap_err().exit_code(), 2);
}

#[test]
fn missing_dataset_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["train", "--dataset", s(&dir.path().join("nope.jsonl")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset not found"));
}

#[test]
fn zero_steps_write_a_header_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let run = dir.path().join("run");
    let out = bin(&["train", "--dataset", s(&data), "--out", s(&run), "--steps", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(run.join("report.csv")).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = bin(&["train", "--dataset", s(&data), "--out", s(&run), "--steps", "6", "--seed", "4", "--k", "8"]);
        assert!(out.status.success());
        outputs.push((fs::read(run.join("report.csv")).unwrap(), fs::read(run.join("batch.jsonl")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let replay = bin(&["report", s(&dir.path().join("a/steps.jsonl"))]);
    assert_eq!(String::from_utf8(replay.stdout).unwrap(), csv);
}

#[test]
fn preloaded_book_is_read_and_kept() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let book_path = dir.path().join("book.json");
    let mut book = MistakeBook::from_json(fixtures::MISTAKE_BOOK_EXAMPLE).unwrap();
    let attack = "assert threeSum([-2, 1, 1, 1, 1], 0) == [[-2, 1, 1]]";
    let tallies: Tallies = [(attack.to_string(), (3, 0))].into_iter().collect();
    book.apply_step_update(fixtures::QUESTION_ID, &tallies);
    book.save(&book_path).unwrap();

    let run = dir.path().join("run");
    let out = bin(&["train", "--dataset", s(&data), "--out", s(&run), "--book", s(&book_path)]);
    assert!(out.status.success());
    let first: StepRecord =
        serde_json::from_str(fs::read_to_string(run.join("steps.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first.stats.hist_size, 1);
    assert!(first.stats.pass_hist.is_some());
    let after = MistakeBook::load(&book_path).unwrap();
    assert_eq!(after.entries("Apps_1564_I"), book.entries("Apps_1564_I"));
    assert_eq!(after.entries("Leetcode_17190_I"), book.entries("Leetcode_17190_I"));
}

#[test]
fn book_inspect_lists_example_questions() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["fixture", "write", s(dir.path())]);
    assert!(out.status.success());
    let out = bin(&["book", "inspect", s(&dir.path().join("mistake_book_example.json"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("2 question(s), 4 test(s)"));
    assert!(text.contains("Apps_1564_I (2 test(s))"));
    assert!(text.contains("Leetcode_17190_I (2 test(s))"));
}

#[test]
fn bon_defaults_to_sixteen_by_sixteen() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let args = BonArgs { common: CommonArgs { dataset: Some(data), seed: Some(2), ..Default::default() }, ..Default::default() };
    let outcomes = cmd_bon(&args).unwrap();
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].counts.len(), 16);
    assert!(outcomes[0].chosen_passes_golden);
}

#[test]
fn eval_reports_mul() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let run = dir.path().join("eval");
    let out = bin(&["eval", "--dataset", s(&data), "--k", "5", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (p, m, mul) = (json["pass_at_k"].as_f64().unwrap(), json["mut_at_k"].as_f64().unwrap(), json["mul"].as_f64().unwrap());
    assert_eq!(json["k"], 5);
    assert!((mul - p * m / 100.0).abs() < 1e-9);
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("k,avg_at_k,pass_at_k,mut_at_k,mul,config_digest\n5,"));
}
