#![allow(dead_code)]

use std::sync::Arc;

use coevolve::assertion::{parse_suite, AssertionCase, parse_assertion, SuiteSource, TestSuite};
use coevolve::fixtures;
use coevolve::mistake_book::MistakeBook;
use coevolve::rollout::{PoolGenerator, RolloutConfig, run_step};
use coevolve::sandbox::{SandboxClient, SimulatedBackend, SupervisionConfig, TruthTable};
use coevolve::script::markers::python_repr;
use coevolve::script::TrainingInputs;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn simulated(table: TruthTable) -> SandboxClient {
    SandboxClient::new(Arc::new(SimulatedBackend::new(table)), SupervisionConfig::test_profile()).unwrap()
}

pub fn fixture_client() -> SandboxClient {
    simulated(fixtures::truth_table())
}

/// A small Python literal tree, rendered compactly or with loose spacing.
#[derive(Debug, Clone)]
pub enum Lit {
    Int(i64),
    Str(String),
    Word(&'static str),
    List(Vec<Lit>),
    Tuple(Vec<Lit>),
    Dict(Vec<(Lit, Lit)>),
}

impl Lit {
    pub fn render(&self, loose: bool) -> String {
        let (open_pad, sep, colon) = if loose { (" ", " ,  ", " :  ") } else { ("", ", ", ": ") };
        let join = |items: Vec<String>| items.join(sep);
        match self {
            Lit::Int(i) => i.to_string(),
            Lit::Str(s) => python_repr(s),
            Lit::Word(w) => w.to_string(),
            Lit::List(v) if v.is_empty() => "[]".into(),
            Lit::List(v) => format!("[{open_pad}{}{open_pad}]", join(v.iter().map(|x| x.render(loose)).collect())),
            Lit::Tuple(v) => format!("({open_pad}{}{open_pad})", join(v.iter().map(|x| x.render(loose)).collect())),
            Lit::Dict(v) if v.is_empty() => "{}".into(),
            Lit::Dict(v) => format!(
                "{{{open_pad}{}{open_pad}}}",
                join(v.iter().map(|(k, x)| format!("{}{colon}{}", k.render(loose), x.render(loose))).collect())
            ),
        }
    }
}

pub fn lit() -> impl Strategy<Value = Lit> {
    let leaf = prop_oneof![
        (-1000i64..1000).prop_map(Lit::Int),
        "[a-z0-9 ,=()#:'\"\\[\\]{}\\\\]{0,8}".prop_map(Lit::Str),
        prop_oneof![Just("None"), Just("True"), Just("False")].prop_map(Lit::Word),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Lit::List),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Lit::Tuple),
            prop::collection::vec((inner.clone(), inner), 0..3).prop_map(Lit::Dict),
        ]
    })
}

/// Function name, argument literals and expected literal of one assertion.
pub fn assertion_parts() -> impl Strategy<Value = (String, Vec<Lit>, Lit)> {
    ("[a-z_][a-zA-Z0-9_]{0,6}", prop::collection::vec(lit(), 0..4), lit())
}

pub fn render_assert(func: &str, args: &[Lit], expected: &Lit, loose: bool) -> String {
    let sep = if loose { " ,   " } else { ", " };
    let args: Vec<String> = args.iter().map(|a| a.render(loose)).collect();
    if loose {
        format!("assert   {func}( {} )   ==   {}  ", args.join(sep), expected.render(true))
    } else {
        format!("assert {func}({}) == {}", args.join(sep), expected.render(false))
    }
}

/// A random truth table over candidates `c0..`, calls `f(i)` and string
/// calls, plus a training batch drawn from it.
pub fn random_batch(rng: &mut ChaCha8Rng) -> (TruthTable, TrainingInputs) {
    let mut t = TruthTable::default();
    let n_cand = rng.gen_range(1..=4);
    let mut candidates = Vec::new();
    for c in 0..n_cand {
        let src = format!("def f(x):\n    return {c}\n");
        let loads = rng.gen_bool(0.85);
        t.add_candidate(&src, &format!("c{c}"), loads);
        candidates.push(src);
    }
    if rng.gen_bool(0.2) {
        candidates[0] = String::new();
    }
    let calls: Vec<String> = (0..6)
        .map(|i| {
            if i % 2 == 0 {
                format!("f({i})")
            } else {
                format!("f({})", python_repr(&format!("a'b\"c == {i}, #")))
            }
        })
        .collect();
    let values = ["0", "1", "[1, 2]", "'x, y'", "None", "{'k': (1, 2)}"];
    let mut statements = Vec::new();
    for call in &calls {
        let oracle = if rng.gen_bool(0.15) { None } else { Some(values[rng.gen_range(0..values.len())].to_string()) };
        t.oracle.insert(call.clone(), oracle);
        for v in values {
            statements.push(format!("assert {call} == {v}"));
        }
    }
    for c in 0..n_cand {
        for s in &statements {
            t.set_outcome(&format!("c{c}"), s, rng.gen_bool(0.5));
        }
    }
    let n = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=4);
    let pick = |rng: &mut ChaCha8Rng| -> String {
        match rng.gen_range(0..10) {
            0 => "assert broken(".to_string(),
            _ => statements[rng.gen_range(0..statements.len())].clone(),
        }
    };
    let suites: Vec<Vec<TestSuite>> = (0..n_cand)
        .map(|m| {
            (0..n)
                .map(|_| {
                    let lines: Vec<String> = (0..k).map(|_| pick(rng)).collect();
                    parse_suite(&lines.join("\n"), k).with_owner(m)
                })
                .collect()
        })
        .collect();
    let hist: Vec<AssertionCase> = (0..rng.gen_range(0..3)).map(|_| parse_assertion(&statements[rng.gen_range(0..statements.len())])).collect();
    let golden: Vec<AssertionCase> = (0..rng.gen_range(0..3)).map(|_| parse_assertion(&statements[rng.gen_range(0..statements.len())])).collect();
    let oracle_code = rng.gen_bool(0.8).then(|| "def f(x):\n    return None\n".to_string());
    let inputs = TrainingInputs { question_id: "q".into(), oracle_code, candidates, suites, hist, golden };
    (t, inputs)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn suite_of(lines: &[&str], k: usize) -> TestSuite {
    let s = parse_suite(&lines.join("\n"), k);
    TestSuite::new(s.cases, SuiteSource::Generated)
}

/// Per-step arm probabilities of a fixture training run driven directly
/// through `run_step`.
pub struct Trace {
    pub p_correct: Vec<f64>,
    pub p_attack: Vec<f64>,
    pub added: Vec<usize>,
}

pub fn fixture_trace(cfg: &RolloutConfig, steps: usize, lr: f64) -> Trace {
    let client = fixture_client();
    let coder = PoolGenerator::new(fixtures::code_pool(cfg.temperature, cfg.seed));
    let tester = PoolGenerator::new(fixtures::test_pool(cfg.temperature, cfg.seed));
    let questions = vec![fixtures::three_sum()];
    let mut book = MistakeBook::new();
    let mut trace = Trace { p_correct: vec![], p_attack: vec![], added: vec![] };
    for step in 0..steps {
        let out = run_step(step, &questions, &coder, &tester, &mut book, cfg, &client).unwrap();
        coevolve::rollout::PoolLearner { coder: &coder, tester: &tester, lr }.apply(&out.batch);
        trace.p_correct.push(coder.probabilities()[0]);
        trace.p_attack.push(tester.probabilities()[1]);
        trace.added.push(out.records.iter().map(|r| r.book.added).sum());
    }
    trace
}

