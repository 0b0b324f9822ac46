mod common;

use coevolve::assertion::{dedupe, normalize, parse_assertion, parse_suite, TestSuite};
use coevolve::evalkit::{bon_select, generate_mutants};
use coevolve::fixtures;
use coevolve::grpo::{group_advantages, topvar_select};
use coevolve::mistake_book::MistakeBook;
use coevolve::rewards::{adversarial_reward, code_reward, PassRates};
use coevolve::script::markers::python_repr;
use coevolve::script::{
    build_training_script, encode_training_stdout, parse_markers, Nonce, NonceMode, ScriptOptions,
};
use common::*;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rewards_stay_in_unit_interval(h in proptest::option::of(unit()), ns in prop::collection::vec(proptest::option::of(unit()), 0..6)) {
        let rates = PassRates { pass_hist: h, pass_new_per_suite: ns.clone() };
        if let Ok(r) = code_reward(&rates) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        for n in ns {
            let a = adversarial_reward(h, n);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn coder_and_tester_trade_one_for_one(h in proptest::option::of(unit()), n in unit(), d in 0.0..0.25f64) {
        let n2 = (n + d).min(1.0);
        let rc = |x: f64| code_reward(&PassRates { pass_hist: h, pass_new_per_suite: vec![Some(x)] }).unwrap();
        let gain = rc(n2) - rc(n);
        let loss = adversarial_reward(h, Some(n)) - adversarial_reward(h, Some(n2));
        prop_assert!((gain - loss).abs() < 1e-12, "gain {} loss {}", gain, loss);
    }

    #[test]
    fn advantages_ignore_affine_rescaling(xs in prop::collection::vec(unit(), 2..16), a in 0.5..4.0f64, b in -2.0..2.0f64) {
        let g = group_advantages(&xs).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let h = group_advantages(&scaled).unwrap();
        if g.std > 1e-6 {
            for (x, y) in g.advantages.iter().zip(&h.advantages) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn topvar_returns_sorted_distinct_rows(rows in prop::collection::vec(prop::collection::vec(unit(), 4), 1..12), pick in 0usize..12) {
        let ell = pick % rows.len() + 1;
        let got = topvar_select(&rows, ell).unwrap();
        prop_assert_eq!(got.len(), ell);
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        let stds: Vec<f64> = rows.iter().map(|r| group_advantages(r).unwrap().std).collect();
        let min_in = got.iter().map(|&i| stds[i]).fold(f64::INFINITY, f64::min);
        for i in (0..rows.len()).filter(|i| !got.contains(i)) {
            prop_assert!(stds[i] <= min_in);
        }
    }

    #[test]
    fn book_json_round_trips(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mut book = MistakeBook::new();
        for _ in 0..4 {
            let tallies = (0..5)
                .map(|i| (format!("assert g({i}, {}) == 'a,b'", rand::Rng::gen_range(&mut rng, 0..3)), (rand::Rng::gen_range(&mut rng, 0..4), rand::Rng::gen_range(&mut rng, 0..2))))
                .collect();
            book.apply_step_update(&format!("q{}", rand::Rng::gen_range(&mut rng, 0..3)), &tallies);
        }
        prop_assert_eq!(MistakeBook::from_json(&book.to_json()).unwrap(), book.clone());
        for (q, entries) in book.questions() {
            let got = book.retrieve(q, 3);
            prop_assert_eq!(got.len(), entries.len().min(3));
            let freq = |t: &str| entries.iter().find(|e| e.testcase == t).unwrap().frequency;
            prop_assert!(got.windows(2).all(|w| freq(&w[0].canonical) >= freq(&w[1].canonical)));
        }
    }

    #[test]
    fn parser_round_trips((func, args, expected) in assertion_parts()) {
        let tight = render_assert(&func, &args, &expected, false);
        let case = parse_assertion(&render_assert(&func, &args, &expected, true));
        prop_assert!(case.is_parsed(), "{:?}", case);
        prop_assert_eq!(&case.func_name, &func);
        prop_assert_eq!(&case.canonical, &tight);
        prop_assert_eq!(normalize(&case.canonical), Some(tight));
    }

    #[test]
    fn quote_aware_split_keeps_strings_whole(lhs in "[a-z =,'\"#]{0,10}", rhs in "[a-z =,'\"#]{0,10}") {
        let (l, r) = (python_repr(&lhs), python_repr(&rhs));
        let case = parse_assertion(&format!("assert f({l}) == {r}"));
        prop_assert!(case.is_parsed());
        prop_assert_eq!(case.call_expr, format!("f({l})"));
        prop_assert_eq!(case.expected_expr, r);
    }

    #[test]
    fn suites_always_have_k_slots(lines in prop::collection::vec("assert f\\([0-3]\\) == [0-3]|garbage|assert", 0..9), k in 1usize..7) {
        let suite = dedupe(parse_suite(&lines.join("\n"), k));
        prop_assert_eq!(suite.len(), k);
        for (j, c) in suite.cases.iter().enumerate() {
            if let Some(d) = c.duplicate_of {
                prop_assert!(d < j);
                prop_assert_eq!(&suite.cases[d].canonical, &c.canonical);
            }
        }
    }

    #[test]
    fn markers_decode_what_was_encoded(seed in any::<u64>(), noise in prop::collection::vec("[A-Z_:| 0-9]{0,20}", 0..4)) {
        let (table, inputs) = random_batch(&mut rng(seed));
        let job = build_training_script(&inputs, &ScriptOptions { timeout_s: 5.0, nonce: NonceMode::Derived }).unwrap();
        let report = table.training_report(&inputs).unwrap();
        let mut stdout = encode_training_stdout(&report, &job.nonce, None);
        for line in &noise {
            stdout = format!("{line}\n{stdout}");
        }
        let decoded = parse_markers(&stdout, report.shape, &job.nonce);
        prop_assert_eq!(&decoded.candidates, &report.candidates);
        prop_assert_eq!(&decoded.suites, &report.suites);
        let bare = parse_markers(&encode_training_stdout(&report, &Nonce::none(), None), report.shape, &Nonce::none());
        prop_assert_eq!(bare, report);
    }

    #[test]
    fn mutants_differ_at_exactly_one_site(body in prop::collection::vec(mutable_line(), 1..6), seed in any::<u64>(), limit in 1usize..12) {
        let source = format!("def f(a, b):\n{}\n    return a\n", body.join("\n"));
        let Ok(mutants) = generate_mutants(&source, limit, seed) else { return Ok(()) };
        prop_assert!(mutants.len() <= limit);
        prop_assert!(mutants.windows(2).all(|w| w[0].site <= w[1].site));
        prop_assert_eq!(&generate_mutants(&source, limit, seed).unwrap(), &mutants);
        for m in &mutants {
            let (line, col) = m.site;
            let src_lines: Vec<&str> = source.split('\n').collect();
            let mut_lines: Vec<&str> = m.source.split('\n').collect();
            prop_assert_eq!(src_lines.len(), mut_lines.len());
            for (i, (a, b)) in src_lines.iter().zip(&mut_lines).enumerate() {
                if i + 1 != line {
                    prop_assert_eq!(a, b);
                }
            }
            let orig = src_lines[line - 1];
            prop_assert_eq!(&orig[col - 1..col - 1 + m.original.len()], m.original.as_str());
            let spliced = format!("{}{}{}", &orig[..col - 1], m.replacement, &orig[col - 1 + m.original.len()..]);
            prop_assert_eq!(spliced.as_str(), mut_lines[line - 1]);
            prop_assert!(!orig[..col - 1].contains('#'));
            prop_assert_eq!(orig[..col - 1].matches('\'').count() % 2, 0);
        }
    }

    #[test]
    fn bon_ignores_suite_order_and_duplicates(picks in prop::collection::vec(prop::collection::vec(0usize..20, 5), 1..5), cands in prop::collection::vec(0usize..3, 1..5), rot in 0usize..5, dup in 0usize..5) {
        let stmts = fixtures::all_statements();
        let suites: Vec<TestSuite> = picks
            .iter()
            .map(|p| parse_suite(&p.iter().map(|&i| stmts[i].as_str()).collect::<Vec<_>>().join("\n"), 5))
            .collect();
        let pool = [fixtures::correct_code(), fixtures::buggy_code(), fixtures::three_sum().ground_truth];
        let candidates: Vec<String> = cands.iter().map(|&c| pool[c].clone()).collect();
        let client = fixture_client();
        let opts = ScriptOptions::default();
        let base = bon_select(fixtures::QUESTION_ID, &candidates, &suites, &client, &opts).unwrap();
        let mut rotated = suites.clone();
        rotated.rotate_left(rot % suites.len());
        prop_assert_eq!(&bon_select(fixtures::QUESTION_ID, &candidates, &rotated, &client, &opts).unwrap(), &base);
        let mut doubled = suites.clone();
        doubled.push(suites[dup % suites.len()].clone());
        prop_assert_eq!(&bon_select(fixtures::QUESTION_ID, &candidates, &doubled, &client, &opts).unwrap(), &base);
    }
}

fn mutable_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..20).prop_map(|n| format!("    a = a + {n}")),
        Just("    b = a * b - 1".to_string()),
        Just("    if a <= b and a != 0:\n        b = b // 2".to_string()),
        Just("    c = 'x + 1 < 2'  # a - b >= 3".to_string()),
        Just("    flag = True if a > b else False".to_string()),
        Just("    a += -b ** 2".to_string()),
    ]
}
