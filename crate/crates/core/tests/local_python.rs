mod common;

use std::sync::Arc;

use coevolve::assertion::{parse_assertion, parse_suite};
use coevolve::evalkit::{evaluate_code_samples, generate_mutants, mut_at_k, validate_suites};
use coevolve::fixtures;
use coevolve::sandbox::{ExecStatus, LocalBackend, SandboxClient, SupervisionConfig};
use coevolve::script::{build_training_script, RunStatus, ScriptOptions, TrainingInputs};

fn local() -> Option<SandboxClient> {
    let backend = LocalBackend::python3();
    if !backend.available() {
        eprintln!("python3 not available; skipping");
        return None;
    }
    Some(SandboxClient::new(Arc::new(backend), SupervisionConfig::test_profile()).unwrap())
}

fn inputs(candidates: Vec<String>, suites: &[&str], k: usize) -> TrainingInputs {
    let q = fixtures::three_sum();
    TrainingInputs {
        question_id: q.question_id.clone(),
        oracle_code: Some(q.ground_truth.clone()),
        suites: vec![suites.iter().map(|s| parse_suite(s, k)).collect(); candidates.len()],
        candidates,
        hist: vec![parse_assertion("assert threeSum([0, 0, 0, 0], 0) == [[0, 0, 0]]")],
        golden: q.golden_tests.iter().map(|t| parse_assertion(t)).collect(),
    }
}

#[test]
fn reference_passes_every_golden_test() {
    let Some(client) = local() else { return };
    let gt = fixtures::three_sum().ground_truth;
    let job = build_training_script(&inputs(vec![gt], &[fixtures::TESTS_GOLDEN], 8), &ScriptOptions::default()).unwrap();
    let (result, report) = client.run_training(&job);
    assert_eq!(report.status, RunStatus::Ok, "{}", result.stderr);
    assert!(report.anomalies.is_empty(), "{:?}", report.anomalies);
    let cand = &report.candidates[0];
    assert!(cand.code_valid);
    assert_eq!(cand.golden, vec![true; 8]);
    assert_eq!(cand.generated[0], vec![Some(true); 8]);
}

#[test]
fn buggy_candidate_fails_the_repeated_triplet() {
    let Some(client) = local() else { return };
    let stmt = "assert threeSum([-2, 1, 1, 1, 1], 0) == [[-2, 1, 1]]";
    let job = build_training_script(&inputs(vec![fixtures::buggy_code()], &[stmt], 1), &ScriptOptions::default()).unwrap();
    let (_, report) = client.run_training(&job);
    assert_eq!(report.suites[0].slots[0].corrected.as_deref(), Some(stmt));
    assert_eq!(report.candidates[0].generated[0][0], Some(false));
}

#[test]
fn runaway_candidate_times_out() {
    let Some(client) = local() else { return };
    let spin = "def threeSum(nums, target):\n    while True:\n        pass\n".to_string();
    let opts = ScriptOptions { timeout_s: 1.0, ..Default::default() };
    let job = build_training_script(&inputs(vec![spin], &[fixtures::TESTS_GOLDEN], 2), &opts).unwrap();
    let (result, report) = client.run_training(&job);
    assert!(result.wall_time_ms < 5_000, "{result:?}");
    assert_eq!(result.status, ExecStatus::Timeout);
    assert_eq!(report.status, RunStatus::Timeout);
    assert!(report.candidates.iter().all(|c| !c.code_valid));
}

#[test]
fn interpreter_agrees_with_the_truth_table() {
    let Some(client) = local() else { return };
    let job = build_training_script(
        &inputs(
            vec![fixtures::correct_code(), fixtures::buggy_code(), "def threeSum(:".to_string()],
            &[fixtures::TESTS_ATTACK, fixtures::TESTS_BEFORE, fixtures::TESTS_GOLDEN],
            5,
        ),
        &ScriptOptions::default(),
    )
    .unwrap();
    let mut table = fixtures::truth_table();
    table.add_candidate("def threeSum(:", "broken", false);
    let sim = common::simulated(table);
    let (_, real) = client.run_training(&job);
    let (_, want) = sim.run_training(&job);
    assert_eq!(real, want);
}

#[test]
fn mutation_scores_agree_with_the_recorded_table() {
    let Some(client) = local() else { return };
    let q = fixtures::three_sum();
    let sim = common::fixture_client();
    let opts = ScriptOptions { timeout_s: 5.0, ..Default::default() };
    let suites = [parse_suite(fixtures::TESTS_GOLDEN, 5), parse_suite(fixtures::TESTS_ATTACK, 5)];
    let v_real = validate_suites(&q.question_id, &suites, &q.ground_truth, &client, &opts).unwrap();
    let v_sim = validate_suites(&q.question_id, &suites, &q.ground_truth, &sim, &opts).unwrap();
    assert_eq!(v_real, v_sim);
    let mut a = generate_mutants(&q.ground_truth, 12, 1).unwrap();
    let mut b = a.clone();
    let real = mut_at_k(&q.question_id, &v_real, &mut a, &client, &opts).unwrap();
    let want = mut_at_k(&q.question_id, &v_sim, &mut b, &sim, &opts).unwrap();
    assert_eq!(real, want);
    assert_eq!(a, b);

    let samples = vec![fixtures::correct_code(), fixtures::buggy_code()];
    let outcomes = evaluate_code_samples(&q.question_id, &q.entry_point, &q.golden_tests, &samples, &client, &opts).unwrap();
    assert_eq!(outcomes, vec![true, true]);
}
