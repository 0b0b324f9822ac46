use std::fs;
use std::path::PathBuf;

use coevolve::assertion::{parse_assertion, parse_suite};
use coevolve::fixtures;
use coevolve::rollout::{render_chatml, render_code_prompt, render_test_prompt};
use coevolve::script::{build_eval_script, build_training_script, harness_from_asserts, EvalInputs, Nonce, NonceMode, ScriptOptions, TrainingInputs};

/// Compares against `fixtures/snapshots/<name>`; set `UPDATE_SNAPSHOTS=1`
/// to rewrite.
fn snapshot(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/snapshots").join(name);
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from snapshot");
}

fn opts() -> ScriptOptions {
    ScriptOptions { timeout_s: 10.0, nonce: NonceMode::Fixed(Nonce::new("0123abcd").unwrap()) }
}

#[test]
fn training_script() {
    let q = fixtures::three_sum();
    let inputs = TrainingInputs {
        question_id: q.question_id.clone(),
        oracle_code: Some(q.ground_truth.clone()),
        candidates: vec![fixtures::correct_code(), fixtures::buggy_code()],
        suites: vec![vec![parse_suite(fixtures::TESTS_ATTACK, 5)], vec![parse_suite(fixtures::TESTS_BEFORE, 5)]],
        hist: vec![parse_assertion("assert threeSum([0, 0, 0, 0], 0) == [[0, 0, 0]]")],
        golden: q.golden_tests.iter().map(|t| parse_assertion(t)).collect(),
    };
    snapshot("training_script.py", &build_training_script(&inputs, &opts()).unwrap().script);
}

#[test]
fn evaluation_script() {
    let q = fixtures::three_sum();
    let inputs = EvalInputs {
        question_id: q.question_id.clone(),
        harness_code: harness_from_asserts(&q.entry_point, &q.golden_tests),
        entry_point: q.entry_point.clone(),
        candidates: vec![fixtures::correct_code(), fixtures::buggy_code()],
    };
    snapshot("eval_script.py", &build_eval_script(&inputs, &opts()).unwrap().script);
}

#[test]
fn prompts() {
    let q = fixtures::three_sum();
    snapshot("code_prompt.txt", &render_chatml(&render_code_prompt(&q)));
    snapshot("test_prompt.txt", &render_chatml(&render_test_prompt(&q, Some(&fixtures::buggy_code()), 5)));
}
