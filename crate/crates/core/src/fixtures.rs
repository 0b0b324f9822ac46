//! The bundled threeSum corpus: question, reference solution, a correct and a
//! duplicate-blind candidate, three test suites, and a truth table that lets
//! the simulated backend stand in for a guest interpreter.

use serde::Deserialize;

use crate::assertion::extract_code_block;
use crate::grpo::PoolPolicy;
use crate::rollout::Question;
use crate::sandbox::TruthTable;
use crate::script::{harness_from_asserts, EvalOutcome};

pub const QUESTION_ID: &str = "three_sum";
pub const ENTRY_POINT: &str = "threeSum";
pub const QUESTION: &str = include_str!("../fixtures/three_sum/question.py");
pub const GROUND_TRUTH: &str = include_str!("../fixtures/three_sum/ground_truth.py");
pub const GOLDEN_TESTS: &str = include_str!("../fixtures/three_sum/golden_tests.py");
pub const CODE_CORRECT: &str = include_str!("../fixtures/three_sum/code_response_correct.md");
pub const CODE_BUGGY: &str = include_str!("../fixtures/three_sum/code_response_buggy.md");
pub const TESTS_GOLDEN: &str = include_str!("../fixtures/three_sum/test_response_golden.md");
pub const TESTS_BEFORE: &str = include_str!("../fixtures/three_sum/test_response_before.md");
pub const TESTS_ATTACK: &str = include_str!("../fixtures/three_sum/test_response_attack.md");
/// Per-mutant outcomes of every fixture statement, recorded by running each
/// mutant of the reference under CPython (a statement exceeding 0.5s counts
/// as failing).
pub const MUTANT_OUTCOMES: &str = include_str!("../fixtures/three_sum/mutant_outcomes.json");
pub const MISTAKE_BOOK_EXAMPLE: &str = include_str!("../fixtures/mistake_book_example.json");

pub fn three_sum() -> Question {
    Question {
        question_id: QUESTION_ID.to_string(),
        question: QUESTION.trim_end().to_string(),
        ground_truth: GROUND_TRUTH.to_string(),
        entry_point: ENTRY_POINT.to_string(),
        golden_tests: assert_lines(GOLDEN_TESTS),
    }
}

/// One question per line.
pub fn dataset_jsonl() -> String {
    serde_json::to_string(&three_sum()).expect("question serializes") + "\n"
}

fn assert_lines(text: &str) -> Vec<String> {
    text.lines().filter(|l| l.trim_start().starts_with("assert")).map(|l| l.trim().to_string()).collect()
}

/// Statements of the golden, pre-training and attack responses, deduplicated
/// in first-seen order.
pub fn all_statements() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for text in [TESTS_GOLDEN, TESTS_BEFORE, TESTS_ATTACK] {
        for l in assert_lines(text) {
            if !out.contains(&l) {
                out.push(l);
            }
        }
    }
    out
}

pub fn correct_code() -> String {
    extract_code_block(CODE_CORRECT).expect("fixture has a code block")
}

pub fn buggy_code() -> String {
    extract_code_block(CODE_BUGGY).expect("fixture has a code block")
}

#[derive(Deserialize)]
struct MutantRow {
    source: String,
    loads: bool,
    outcomes: std::collections::HashMap<String, bool>,
}

#[derive(Deserialize)]
struct MutantTable {
    mutants: Vec<MutantRow>,
}

/// Sources of every recorded mutant.
pub fn recorded_mutants() -> Vec<String> {
    let t: MutantTable = serde_json::from_str(MUTANT_OUTCOMES).expect("mutant table parses");
    t.mutants.into_iter().map(|m| m.source).collect()
}

/// The correct candidate and the reference pass everything; the buggy
/// candidate passes the golden and pre-training tests and fails every attack
/// test, since it emits repeated triplets.
pub fn truth_table() -> TruthTable {
    let q = three_sum();
    let golden_harness = harness_from_asserts(ENTRY_POINT, &q.golden_tests);
    let attack = assert_lines(TESTS_ATTACK);
    let mut t = TruthTable::default();
    t.add_candidate(&q.ground_truth, "ground_truth", true)
        .add_candidate(&correct_code(), "correct", true)
        .add_candidate(&buggy_code(), "buggy", true);
    for stmt in all_statements() {
        t.set_oracle_from(&stmt);
        for label in ["ground_truth", "correct"] {
            t.set_outcome(label, &stmt, true);
        }
        t.set_outcome("buggy", &stmt, !attack.contains(&stmt));
    }
    for label in ["ground_truth", "correct", "buggy"] {
        t.eval.insert((label.to_string(), golden_harness.clone()), EvalOutcome::Pass);
    }
    let table: MutantTable = serde_json::from_str(MUTANT_OUTCOMES).expect("mutant table parses");
    for (i, m) in table.mutants.iter().enumerate() {
        let label = format!("mutant_{i}");
        t.add_candidate(&m.source, &label, m.loads);
        for (stmt, pass) in &m.outcomes {
            t.set_outcome(&label, stmt, *pass);
        }
        let golden_ok = q.golden_tests.iter().all(|s| m.outcomes.get(s).copied().unwrap_or(false));
        let outcome = if m.loads && golden_ok { EvalOutcome::Pass } else { EvalOutcome::Fail };
        t.eval.insert((label, golden_harness.clone()), outcome);
    }
    t
}

/// Coder arms: the correct and the buggy response.
pub fn code_pool(temperature: f64, seed: u64) -> PoolPolicy {
    PoolPolicy::new(vec![CODE_CORRECT.to_string(), CODE_BUGGY.to_string()], temperature, seed)
        .expect("two arms, positive temperature")
}

/// Tester arms: the golden-style response and the duplicate attack.
pub fn test_pool(temperature: f64, seed: u64) -> PoolPolicy {
    PoolPolicy::new(vec![TESTS_GOLDEN.to_string(), TESTS_ATTACK.to_string()], temperature, seed)
        .expect("two arms, positive temperature")
}
