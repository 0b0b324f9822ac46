//! Assertion-format test cases: `assert func(args) == answer`.
//!
//! Generated tests are kept as text. Equality is judged inside the sandbox,
//! so the host only needs to split a statement at its top-level `==`, check
//! bracket and quote balance, and render a whitespace-canonical form used for
//! deduplication and as the Mistake Book key.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::{is_ident_byte, is_ident_start, segments, Segment};

/// Sentinel stored in `expected_expr` when a statement has no comparison.
pub const MISSING_EXPECTED: &str = "<missing>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssertionError {
    #[error("response contains no fenced code block")]
    NoBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Parsed,
    Malformed,
}

/// One parsed (or rejected) assertion statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionCase {
    pub raw: String,
    pub func_name: String,
    pub call_expr: String,
    pub expected_expr: String,
    pub canonical: String,
    pub status: CaseStatus,
    /// Index of an earlier case in the same suite with identical canonical text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<usize>,
}

impl AssertionCase {
    fn malformed(raw: &str) -> Self {
        Self {
            raw: raw.to_string(),
            func_name: String::new(),
            call_expr: String::new(),
            expected_expr: MISSING_EXPECTED.to_string(),
            canonical: collapse_ws(raw.trim()),
            status: CaseStatus::Malformed,
            duplicate_of: None,
        }
    }

    /// Empty slot used to pad a suite up to its declared size.
    pub fn placeholder() -> Self {
        Self::malformed("")
    }

    pub fn is_parsed(&self) -> bool {
        self.status == CaseStatus::Parsed
    }

    pub fn is_duplicate(&self) -> bool {
        self.duplicate_of.is_some()
    }

    /// Parsed and not a textual duplicate: the case will be sent for validation.
    pub fn is_candidate_for_validation(&self) -> bool {
        self.is_parsed() && !self.is_duplicate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSource {
    Generated,
    Golden,
    Historical,
}

/// An ordered group of exactly `k` cases. Order follows the response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub cases: Vec<AssertionCase>,
    pub source: SuiteSource,
    /// Candidate whose code conditioned the generating prompt (white-box).
    pub owner_candidate: Option<usize>,
}

impl TestSuite {
    pub fn new(cases: Vec<AssertionCase>, source: SuiteSource) -> Self {
        Self { cases, source, owner_candidate: None }
    }

    /// A suite of `k` malformed placeholders, used when nothing could be extracted.
    pub fn empty(k: usize, source: SuiteSource) -> Self {
        Self::new(vec![AssertionCase::placeholder(); k], source)
    }

    pub fn with_owner(mut self, owner: usize) -> Self {
        self.owner_candidate = Some(owner);
        self
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Cases the host already knows are invalid: malformed or duplicated.
    pub fn host_invalid_count(&self) -> usize {
        self.cases.iter().filter(|c| !c.is_candidate_for_validation()).count()
    }
}

/// Returns the body of the first triple-backtick fenced block.
pub fn extract_code_block(response: &str) -> Result<String, AssertionError> {
    let open = response.find("```").ok_or(AssertionError::NoBlock)?;
    let after_open = &response[open + 3..];
    // The rest of the opening line is an info string (e.g. `python`).
    let body_start = after_open.find('\n').ok_or(AssertionError::NoBlock)? + 1;
    let body = &after_open[body_start..];
    let close = body.find("```").ok_or(AssertionError::NoBlock)?;
    Ok(trim_blank_lines(&body[..close]))
}

fn trim_blank_lines(s: &str) -> String {
    let lines: Vec<&str> = s.lines().collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when `line` begins with the `assert` keyword.
fn starts_with_assert(line: &str) -> bool {
    let t = line.trim_start();
    match t.strip_prefix("assert") {
        Some(rest) => rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace() || c == '('),
        None => false,
    }
}

/// Drops a trailing `# comment` that lies outside string literals.
fn strip_comment(s: &str) -> Option<&str> {
    let segs = segments(s)?;
    for seg in segs {
        if let Segment::Code(i) = seg {
            if s.as_bytes()[i] == b'#' {
                return Some(&s[..i]);
            }
        }
    }
    Some(s)
}

/// Top-level structure of an expression: positions of `==`, `,` and `;` at
/// bracket depth zero. `None` if quotes or brackets are unbalanced.
struct TopLevel {
    eq_positions: Vec<usize>,
    commas: usize,
    semicolons: usize,
}

fn scan_top_level(s: &str) -> Option<TopLevel> {
    let bytes = s.as_bytes();
    let segs = segments(s)?;
    let mut depth: Vec<u8> = Vec::new();
    let mut top = TopLevel { eq_positions: Vec::new(), commas: 0, semicolons: 0 };
    let mut k = 0;
    while k < segs.len() {
        let Segment::Code(i) = segs[k] else {
            k += 1;
            continue;
        };
        let c = bytes[i];
        match c {
            b'(' | b'[' | b'{' => depth.push(c),
            b')' | b']' | b'}' => {
                let want = match c {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                if depth.pop() != Some(want) {
                    return None;
                }
            }
            b'=' if depth.is_empty() => {
                let next_is_eq = matches!(segs.get(k + 1), Some(Segment::Code(j)) if bytes[*j] == b'=');
                let prev_is_op = i > 0 && matches!(bytes[i - 1], b'=' | b'!' | b'<' | b'>');
                if next_is_eq && !prev_is_op {
                    top.eq_positions.push(i);
                    k += 2;
                    continue;
                }
            }
            b',' if depth.is_empty() => top.commas += 1,
            b';' if depth.is_empty() => top.semicolons += 1,
            _ => {}
        }
        k += 1;
    }
    if depth.is_empty() {
        Some(top)
    } else {
        None
    }
}

/// Whitespace-canonical rendering of an expression: runs of whitespace outside
/// string literals become one space, no space directly inside brackets or
/// before `,` and `:`, exactly one space after `,` and `:`.
pub fn canonical_expr(s: &str) -> Option<String> {
    let s = s.trim();
    let bytes = s.as_bytes();
    let segs = segments(s)?;
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    let mut last: Option<u8> = None;
    for seg in segs {
        let (text, first) = match seg {
            Segment::Code(i) => {
                let c = bytes[i];
                if c.is_ascii_whitespace() {
                    pending_space = true;
                    continue;
                }
                (&s[i..i + 1], c)
            }
            Segment::Str(a, b) => (&s[a..b], bytes[a]),
        };
        let is_closer = matches!(first, b')' | b']' | b'}') && matches!(seg, Segment::Code(_));
        let tight_before = is_closer || (matches!(seg, Segment::Code(_)) && matches!(first, b',' | b':'));
        let space = match last {
            None => false,
            Some(b'(' | b'[' | b'{') => false,
            Some(b',' | b':') => !is_closer,
            Some(_) => pending_space && !tight_before,
        };
        if space {
            out.push(' ');
        }
        out.push_str(text);
        last = match seg {
            Segment::Code(_) => Some(first),
            // A string literal behaves like an atom.
            Segment::Str(..) => Some(b'"'),
        };
        pending_space = false;
    }
    Some(out)
}

/// Parses one statement candidate. Never fails: problems yield `Malformed`.
pub fn parse_assertion(line: &str) -> AssertionCase {
    parse_inner(line).unwrap_or_else(|| AssertionCase::malformed(line))
}

fn parse_inner(line: &str) -> Option<AssertionCase> {
    if line.contains('\n') || !starts_with_assert(line) {
        return None;
    }
    let body = strip_comment(line.trim())?;
    let body = body.trim_start().strip_prefix("assert")?.trim();
    let top = scan_top_level(body)?;
    if top.eq_positions.len() != 1 || top.commas != 0 || top.semicolons != 0 {
        return None;
    }
    let split = top.eq_positions[0];
    let call_raw = body[..split].trim();
    let expected_raw = body[split + 2..].trim();
    if expected_raw.is_empty() {
        return None;
    }

    let call_bytes = call_raw.as_bytes();
    if call_bytes.is_empty() || !is_ident_start(call_bytes[0]) {
        return None;
    }
    let name_end = call_bytes.iter().position(|&b| !is_ident_byte(b)).unwrap_or(call_bytes.len());
    let func_name = &call_raw[..name_end];
    if func_name == "assert" || func_name == "lambda" || func_name == "not" {
        return None;
    }
    let args = call_raw[name_end..].trim_start();
    if !args.starts_with('(') || !args.ends_with(')') || !outer_parens_match(args) {
        return None;
    }

    let call_expr = format!("{func_name}{}", canonical_expr(args)?);
    let expected_expr = canonical_expr(expected_raw)?;
    Some(AssertionCase {
        raw: line.to_string(),
        func_name: func_name.to_string(),
        canonical: format!("assert {call_expr} == {expected_expr}"),
        call_expr,
        expected_expr,
        status: CaseStatus::Parsed,
        duplicate_of: None,
    })
}

/// True when the `(` at position 0 closes exactly at the last byte.
fn outer_parens_match(s: &str) -> bool {
    let Some(segs) = segments(s) else { return false };
    let bytes = s.as_bytes();
    let mut depth = 0i32;
    for seg in segs {
        if let Segment::Code(i) = seg {
            match bytes[i] {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => {
                    depth -= 1;
                    if depth == 0 && i != bytes.len() - 1 {
                        return false;
                    }
                }
                _ => {}
            }
        }
    }
    depth == 0
}

/// Canonical text of a statement, or `None` if it does not parse.
pub fn normalize(stmt: &str) -> Option<String> {
    let case = parse_assertion(stmt);
    case.is_parsed().then_some(case.canonical)
}

/// Splits a code block into exactly `k` cases. Lines not starting with
/// `assert` are skipped; extra cases are truncated; missing slots are padded
/// with malformed placeholders.
pub fn parse_suite(block: &str, k: usize) -> TestSuite {
    let mut cases: Vec<AssertionCase> = block
        .lines()
        .filter(|l| starts_with_assert(l))
        .take(k)
        .map(parse_assertion)
        .collect();
    cases.resize_with(k, AssertionCase::placeholder);
    dedupe(TestSuite::new(cases, SuiteSource::Generated))
}

/// Flags every parsed case whose canonical text repeats an earlier one.
pub fn dedupe(mut suite: TestSuite) -> TestSuite {
    let mut first_seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, case) in suite.cases.iter_mut().enumerate() {
        case.duplicate_of = None;
        if !case.is_parsed() {
            continue;
        }
        match first_seen.get(&case.canonical) {
            Some(&j) => case.duplicate_of = Some(j),
            None => {
                first_seen.insert(case.canonical.clone(), i);
            }
        }
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = include_str!("../fixtures/three_sum/golden_tests.py");

    #[test]
    fn minimal_fence() {
        assert_eq!(extract_code_block("```\nreturn 1\n```").unwrap(), "return 1");
    }

    #[test]
    fn fence_with_info_string_and_blank_lines() {
        let r = "Here you go:\n```python\n\n\ndef f():\n    return 1\n\n```\ntrailing prose";
        assert_eq!(extract_code_block(r).unwrap(), "def f():\n    return 1");
    }

    #[test]
    fn no_fence_is_an_error() {
        assert_eq!(extract_code_block("no fences here"), Err(AssertionError::NoBlock));
        assert_eq!(extract_code_block("```python\nunclosed"), Err(AssertionError::NoBlock));
    }

    #[test]
    fn code_response_example_extracts_function() {
        let response = include_str!("../fixtures/three_sum/code_response_buggy.md");
        let code = extract_code_block(response).unwrap();
        assert!(code.starts_with("def threeSum(nums, target):"));
        assert!(code.ends_with("    return res"));
        assert_eq!(code.lines().count(), 19);
    }

    #[test]
    fn parses_golden_example() {
        let c = parse_assertion("assert threeSum([-1, 0, 1, 2, -1, -4], 0) == [[-1, -1, 2], [-1, 0, 1]]");
        assert!(c.is_parsed());
        assert_eq!(c.func_name, "threeSum");
        assert_eq!(c.call_expr, "threeSum([-1, 0, 1, 2, -1, -4], 0)");
        assert_eq!(c.expected_expr, "[[-1, -1, 2], [-1, 0, 1]]");
    }

    #[test]
    fn missing_comparison_is_malformed() {
        let c = parse_assertion("assert f(1)");
        assert_eq!(c.status, CaseStatus::Malformed);
        assert_eq!(c.expected_expr, MISSING_EXPECTED);
    }

    #[test]
    fn split_is_quote_aware() {
        let c = parse_assertion(r#"assert g("a==b") == 2"#);
        assert_eq!(c.call_expr, r#"g("a==b")"#);
        assert_eq!(c.expected_expr, "2");
    }

    #[test]
    fn split_is_bracket_aware() {
        let c = parse_assertion("assert h([x == 1 for x in (1, 2)]) == [True, False]");
        assert!(c.is_parsed());
        assert_eq!(c.call_expr, "h([x == 1 for x in (1, 2)])");
    }

    #[test]
    fn rejects_non_call_shapes() {
        for s in [
            "assert x == 1",
            "assert f(1)(2) == 3",
            "assert f(1) == 2, 'msg'",
            "assert f(1) == 2 == 2",
            "assert f(1 == 2",
            "assert f('1) == 2",
            "assert f(1) ==",
            "print(f(1) == 2)",
            "assert f(1) != 2",
            "assert f(1) == 2; g()",
        ] {
            assert_eq!(parse_assertion(s).status, CaseStatus::Malformed, "{s}");
        }
    }

    #[test]
    fn trailing_comment_is_ignored() {
        let c = parse_assertion("assert f(1) == 2  # simple # case");
        assert_eq!(c.canonical, "assert f(1) == 2");
        let c = parse_assertion("assert f('#') == 2");
        assert_eq!(c.call_expr, "f('#')");
    }

    #[test]
    fn canonical_collapses_whitespace_outside_strings() {
        let c = parse_assertion("assert  f ( 1 ,2,  'a  b' ) ==   { 1 :2 }");
        assert_eq!(c.canonical, "assert f(1, 2, 'a  b') == {1: 2}");
    }

    #[test]
    fn golden_block_gives_eight_cases() {
        let s = parse_suite(GOLDEN, 8);
        assert_eq!(s.len(), 8);
        assert!(s.cases.iter().all(|c| c.is_parsed() && c.func_name == "threeSum"));
        assert_eq!(s.host_invalid_count(), 0);
    }

    #[test]
    fn suite_truncates_to_k() {
        let block: String = (0..10).map(|i| format!("assert f({i}) == {i}\n")).collect();
        let s = parse_suite(&block, 8);
        assert_eq!(s.len(), 8);
        assert_eq!(s.cases[7].call_expr, "f(7)");
    }

    #[test]
    fn suite_pads_to_k() {
        let s = parse_suite("assert f(1) == 1\nassert f(2) == 2\nassert f(3) == 3", 5);
        assert_eq!(s.len(), 5);
        assert_eq!(s.cases.iter().filter(|c| c.is_parsed()).count(), 3);
        assert_eq!(s.host_invalid_count(), 2);
    }

    #[test]
    fn prose_lines_do_not_consume_slots() {
        let s = parse_suite("# tests\nHere are tests:\n\nassert f(1) == 1\nassertion text\nassert f(2) == 2", 2);
        assert_eq!(s.cases.iter().filter(|c| c.is_parsed()).count(), 2);
    }

    #[test]
    fn multiline_assertion_is_malformed() {
        let s = parse_suite("assert f(1) == [\n    1,\n]\nassert f(2) == 2", 2);
        assert_eq!(s.cases[0].status, CaseStatus::Malformed);
        assert!(s.cases[1].is_parsed());
    }

    #[test]
    fn dedupe_flags_second_copy() {
        let s = parse_suite("assert f(1) == 1\nassert f(1) == 1", 2);
        assert_eq!(s.cases[1].duplicate_of, Some(0));
        assert_eq!(s.host_invalid_count(), 1);
    }

    #[test]
    fn dedupe_keeps_same_call_different_expected() {
        let s = parse_suite("assert f(1) == 1\nassert f(1) == 2", 2);
        assert!(s.cases.iter().all(|c| !c.is_duplicate()));
    }

    #[test]
    fn dedupe_sees_through_whitespace_variants() {
        // The normalizer applied to each statement independently agrees.
        assert_eq!(normalize("assert f( 1 ) == 1"), normalize("assert f(1) == 1"));
        let s = parse_suite("assert f( 1 ) == 1\nassert f(1) == 1", 2);
        assert_eq!(s.cases[1].duplicate_of, Some(0));
    }

    #[test]
    fn malformed_cases_are_never_duplicates() {
        let s = parse_suite("assert f(1)\nassert f(1)", 2);
        assert!(s.cases.iter().all(|c| !c.is_duplicate()));
        assert_eq!(s.host_invalid_count(), 2);
    }
}
