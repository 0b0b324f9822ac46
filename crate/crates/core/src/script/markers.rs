//! Stdout marker protocol.
//!
//! Every marker is one line:
//!
//! ```text
//! __KIND__[nonce]ids:payload
//! ```
//!
//! * `KIND` is one of the tokens in [`MarkerKind`].
//! * `[nonce]` is present when the job carries a nonce. Lines whose nonce does
//!   not match are treated as spoofed and counted as anomalies.
//! * `ids` is `primary` or `primary_sub` (decimal), possibly empty.
//! * `:payload` is optional free text up to the end of the line.
//!
//! With an empty nonce the grammar reduces to the bare tokens, e.g.
//! `__GEN_PASS__3_0` or `__INVALID_TEST__2:4`.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pystr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkerKind {
    GenStart,
    GenPass,
    GenFail,
    InvalidTest,
    CodeValid,
    GtPass,
    GtFail,
    AttackStart,
    AttackPass,
    AttackFail,
    Pass,
    Timeout,
    Fail,
}

impl MarkerKind {
    pub const ALL: [MarkerKind; 13] = [
        MarkerKind::GenStart,
        MarkerKind::GenPass,
        MarkerKind::GenFail,
        MarkerKind::InvalidTest,
        MarkerKind::CodeValid,
        MarkerKind::GtPass,
        MarkerKind::GtFail,
        MarkerKind::AttackStart,
        MarkerKind::AttackPass,
        MarkerKind::AttackFail,
        MarkerKind::Pass,
        MarkerKind::Timeout,
        MarkerKind::Fail,
    ];

    pub fn token(self) -> &'static str {
        match self {
            MarkerKind::GenStart => "GEN_START",
            MarkerKind::GenPass => "GEN_PASS",
            MarkerKind::GenFail => "GEN_FAIL",
            MarkerKind::InvalidTest => "INVALID_TEST",
            MarkerKind::CodeValid => "CODE_VALID",
            MarkerKind::GtPass => "GT_PASS",
            MarkerKind::GtFail => "GT_FAIL",
            MarkerKind::AttackStart => "ATTACK_START",
            MarkerKind::AttackPass => "ATTACK_PASS",
            MarkerKind::AttackFail => "ATTACK_FAIL",
            MarkerKind::Pass => "PASS",
            MarkerKind::Timeout => "TIMEOUT",
            MarkerKind::Fail => "FAIL",
        }
    }
}

impl fmt::Display for MarkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "__{}__", self.token())
    }
}

/// Per-job token that authenticates marker lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nonce(String);

impl Nonce {
    pub fn none() -> Self {
        Nonce(String::new())
    }

    /// Accepts ASCII alphanumerics only, so the nonce never collides with
    /// grammar punctuation.
    pub fn new(s: impl Into<String>) -> Option<Self> {
        let s = s.into();
        s.bytes().all(|b| b.is_ascii_alphanumeric()).then_some(Nonce(s))
    }

    /// 16 hex digits of SHA-256 over the given parts. Candidates cannot know
    /// the value in advance because their own text is hashed into it.
    pub fn derive<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut h = Sha256::new();
        for p in parts {
            let p = p.as_ref();
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        Nonce(hex::encode(&h.finalize()[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerEvent {
    pub kind: MarkerKind,
    pub primary: Option<usize>,
    pub sub: Option<usize>,
    pub payload: Option<String>,
}

impl MarkerEvent {
    pub fn new(kind: MarkerKind) -> Self {
        Self { kind, primary: None, sub: None, payload: None }
    }

    pub fn ids(mut self, primary: usize, sub: Option<usize>) -> Self {
        self.primary = Some(primary);
        self.sub = sub;
        self
    }

    pub fn payload(mut self, payload: impl Into<String>) -> Self {
        self.payload = Some(payload.into());
        self
    }

    pub fn render(&self, nonce: &Nonce) -> String {
        let mut line = self.kind.to_string();
        if !nonce.is_empty() {
            line.push('[');
            line.push_str(nonce.as_str());
            line.push(']');
        }
        if let Some(p) = self.primary {
            line.push_str(&p.to_string());
            if let Some(s) = self.sub {
                line.push('_');
                line.push_str(&s.to_string());
            }
        }
        if let Some(payload) = &self.payload {
            line.push(':');
            line.push_str(payload);
        }
        line
    }
}

/// Result of decoding one stdout line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineParse {
    /// Ordinary program output.
    NotMarker,
    Marker(MarkerEvent),
    /// Looks like a marker but fails the grammar or the nonce check.
    Anomaly(String),
}

pub fn parse_line(line: &str, nonce: &Nonce) -> LineParse {
    let line = line.trim_end_matches('\r');
    if !line.starts_with("__") {
        return LineParse::NotMarker;
    }
    let Some((kind, rest)) = MarkerKind::ALL.iter().find_map(|k| {
        let tok = k.to_string();
        line.strip_prefix(tok.as_str()).map(|rest| (*k, rest))
    }) else {
        return LineParse::NotMarker;
    };

    let rest = if nonce.is_empty() {
        if rest.starts_with('[') {
            return LineParse::Anomaly(format!("unexpected nonce on {kind}"));
        }
        rest
    } else {
        match rest.strip_prefix('[').and_then(|r| r.strip_prefix(nonce.as_str())).and_then(|r| r.strip_prefix(']')) {
            Some(r) => r,
            None => return LineParse::Anomaly(format!("nonce mismatch on {kind}")),
        }
    };

    let (ids, payload) = match rest.find(':') {
        Some(i) => (&rest[..i], Some(rest[i + 1..].to_string())),
        None => (rest, None),
    };
    let mut event = MarkerEvent { kind, primary: None, sub: None, payload };
    if !ids.is_empty() {
        let mut parts = ids.splitn(2, '_');
        let primary = parts.next().and_then(parse_index);
        let sub = parts.next().map(parse_index);
        match (primary, sub) {
            (Some(p), None) => event.primary = Some(p),
            (Some(p), Some(Some(s))) => {
                event.primary = Some(p);
                event.sub = Some(s);
            }
            _ => return LineParse::Anomaly(format!("bad ids {ids:?} on {kind}")),
        }
    }
    LineParse::Marker(event)
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

// ---------------------------------------------------------------------------
// Training reports
// ---------------------------------------------------------------------------

/// Declared dimensions of a training job: M candidates, N suites per
/// candidate, K slots per suite, plus historical and golden test counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportShape {
    pub candidates: usize,
    pub suites_per_candidate: usize,
    pub tests_per_suite: usize,
    pub hist: usize,
    pub golden: usize,
}

impl ReportShape {
    pub fn num_suites(&self) -> usize {
        self.candidates * self.suites_per_candidate
    }

    pub fn owner_of(&self, suite: usize) -> (usize, usize) {
        (suite / self.suites_per_candidate, suite % self.suites_per_candidate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Timeout,
    InfraError,
}

/// Outcome of validating one generated slot against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotVerdict {
    /// Never reached (host-side invalid, or the script stopped early).
    #[default]
    NotRun,
    Valid,
    WrongAnswer,
    Duplicate,
    ExecError,
}

impl SlotVerdict {
    /// Slots that announced a corrected statement and are run against candidates.
    pub fn is_usable(self) -> bool {
        matches!(self, SlotVerdict::Valid | SlotVerdict::WrongAnswer)
    }

    fn reason(self) -> Option<&'static str> {
        match self {
            SlotVerdict::WrongAnswer => Some("wrong"),
            SlotVerdict::Duplicate => Some("duplicate"),
            SlotVerdict::ExecError => Some("error"),
            _ => None,
        }
    }

    fn from_reason(s: &str) -> Option<Self> {
        match s {
            "wrong" => Some(SlotVerdict::WrongAnswer),
            "duplicate" => Some(SlotVerdict::Duplicate),
            "error" => Some(SlotVerdict::ExecError),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotReport {
    pub verdict: SlotVerdict,
    /// Statement with the oracle's value substituted, as printed by the script.
    pub corrected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Total invalid count reported for the suite, including host-side invalids.
    pub invalid_count: Option<usize>,
    pub slots: Vec<SlotReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub code_valid: bool,
    pub golden: Vec<bool>,
    pub hist: Vec<bool>,
    /// `[n][j]`: `None` for slots that were not announced by validation.
    pub generated: Vec<Vec<Option<bool>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub shape: ReportShape,
    pub status: RunStatus,
    pub candidates: Vec<CandidateReport>,
    pub suites: Vec<SuiteReport>,
    pub anomalies: Vec<String>,
}

impl ExecutionReport {
    /// A report where nothing ran: every slot NotRun, every test FAIL.
    pub fn blank(shape: ReportShape, status: RunStatus) -> Self {
        let k = shape.tests_per_suite;
        Self {
            shape,
            status,
            candidates: (0..shape.candidates)
                .map(|_| CandidateReport {
                    code_valid: false,
                    golden: vec![false; shape.golden],
                    hist: vec![false; shape.hist],
                    generated: vec![vec![None; k]; shape.suites_per_candidate],
                })
                .collect(),
            suites: (0..shape.num_suites())
                .map(|_| SuiteReport { invalid_count: None, slots: vec![SlotReport::default(); k] })
                .collect(),
            anomalies: Vec::new(),
        }
    }

    pub fn suite(&self, candidate: usize, n: usize) -> &SuiteReport {
        &self.suites[candidate * self.shape.suites_per_candidate + n]
    }
}

/// Decodes training-script stdout. Never fails: missing markers decode as
/// FAIL, malformed or out-of-range markers are discarded and recorded as
/// anomalies.
pub fn parse_markers(stdout: &str, shape: ReportShape, nonce: &Nonce) -> ExecutionReport {
    let mut report = ExecutionReport::blank(shape, RunStatus::Ok);
    let mut seen_any = false;
    let k = shape.tests_per_suite;

    for line in stdout.lines() {
        let ev = match parse_line(line, nonce) {
            LineParse::NotMarker => continue,
            LineParse::Anomaly(note) => {
                report.anomalies.push(note);
                continue;
            }
            LineParse::Marker(ev) => ev,
        };
        seen_any = true;
        if let Err(note) = apply_event(&mut report, &ev, k) {
            report.anomalies.push(format!("{}: {note}", ev.render(&Nonce::none())));
        }
    }

    // Announced slots without a verdict from their owner decode as FAIL.
    for s in 0..shape.num_suites() {
        let (m, n) = shape.owner_of(s);
        for j in 0..k {
            if report.suites[s].slots[j].verdict.is_usable() {
                let cell = &mut report.candidates[m].generated[n][j];
                cell.get_or_insert(false);
            }
        }
    }
    if !seen_any {
        report.anomalies.push("no markers in output".to_string());
    }
    report
}

fn apply_event(report: &mut ExecutionReport, ev: &MarkerEvent, k: usize) -> Result<(), String> {
    let shape = report.shape;
    let pair = || -> Result<(usize, usize), String> {
        match (ev.primary, ev.sub) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err("expected two ids".into()),
        }
    };
    let suite_slot = |(s, j): (usize, usize)| -> Result<(usize, usize), String> {
        if s >= shape.num_suites() || j >= k {
            Err("suite/slot out of range".into())
        } else {
            Ok((s, j))
        }
    };
    match ev.kind {
        MarkerKind::GenStart => {
            let (s, j) = suite_slot(pair()?)?;
            let slot = &mut report.suites[s].slots[j];
            if slot.verdict != SlotVerdict::NotRun {
                return Err("slot announced twice".into());
            }
            slot.verdict = SlotVerdict::Valid;
            slot.corrected = match ev.payload.as_deref().map(pystr::unrepr) {
                Some(Some(text)) => Some(text),
                _ => return Err("undecodable statement payload".into()),
            };
        }
        MarkerKind::InvalidTest => match (ev.primary, ev.sub) {
            (Some(s), None) => {
                if s >= shape.num_suites() {
                    return Err("suite out of range".into());
                }
                let count: usize = ev
                    .payload
                    .as_deref()
                    .and_then(|p| p.trim().parse().ok())
                    .ok_or_else(|| "bad invalid count".to_string())?;
                if count > k {
                    report.suites[s].invalid_count = Some(k);
                    return Err("invalid count exceeds K".into());
                }
                report.suites[s].invalid_count = Some(count);
            }
            (Some(s), Some(j)) => {
                let (s, j) = suite_slot((s, j))?;
                let verdict = ev
                    .payload
                    .as_deref()
                    .and_then(SlotVerdict::from_reason)
                    .ok_or_else(|| "unknown invalid reason".to_string())?;
                let slot = &mut report.suites[s].slots[j];
                match (slot.verdict, verdict) {
                    (SlotVerdict::Valid, SlotVerdict::WrongAnswer) => slot.verdict = verdict,
                    (SlotVerdict::NotRun, SlotVerdict::Duplicate | SlotVerdict::ExecError) => slot.verdict = verdict,
                    _ => return Err("inconsistent slot verdict".into()),
                }
            }
            _ => return Err("missing suite id".into()),
        },
        MarkerKind::CodeValid => {
            let m = ev.primary.filter(|&m| m < shape.candidates).ok_or("candidate out of range")?;
            report.candidates[m].code_valid = true;
        }
        MarkerKind::GtPass | MarkerKind::GtFail => {
            let (m, i) = pair()?;
            if m >= shape.candidates || i >= shape.golden {
                return Err("golden index out of range".into());
            }
            report.candidates[m].golden[i] = ev.kind == MarkerKind::GtPass;
        }
        MarkerKind::AttackStart => {
            let (m, i) = pair()?;
            if m >= shape.candidates || i >= shape.hist {
                return Err("historical index out of range".into());
            }
        }
        MarkerKind::AttackPass | MarkerKind::AttackFail => {
            let (m, i) = pair()?;
            if m >= shape.candidates || i >= shape.hist {
                return Err("historical index out of range".into());
            }
            report.candidates[m].hist[i] = ev.kind == MarkerKind::AttackPass;
        }
        MarkerKind::GenPass | MarkerKind::GenFail => {
            let (s, j) = suite_slot(pair()?)?;
            if !report.suites[s].slots[j].verdict.is_usable() {
                return Err("result for a slot never announced".into());
            }
            let (m, n) = shape.owner_of(s);
            report.candidates[m].generated[n][j] = Some(ev.kind == MarkerKind::GenPass);
        }
        MarkerKind::Pass | MarkerKind::Timeout | MarkerKind::Fail => {
            return Err("evaluation marker in training output".into());
        }
    }
    Ok(())
}

/// Renders the stdout a training script would print for `report`, in script
/// order. `hist_texts`, when given, fills the ATTACK_START payloads.
pub fn encode_training_stdout(report: &ExecutionReport, nonce: &Nonce, hist_texts: Option<&[String]>) -> String {
    let shape = report.shape;
    let mut lines = Vec::new();
    for (s, suite) in report.suites.iter().enumerate() {
        for (j, slot) in suite.slots.iter().enumerate() {
            if slot.verdict.is_usable() {
                let stmt = slot.corrected.as_deref().unwrap_or_default();
                lines.push(
                    MarkerEvent::new(MarkerKind::GenStart)
                        .ids(s, Some(j))
                        .payload(python_repr(stmt))
                        .render(nonce),
                );
            }
            if let Some(reason) = slot.verdict.reason() {
                lines.push(MarkerEvent::new(MarkerKind::InvalidTest).ids(s, Some(j)).payload(reason).render(nonce));
            }
        }
        if let Some(count) = suite.invalid_count {
            lines.push(MarkerEvent::new(MarkerKind::InvalidTest).ids(s, None).payload(count.to_string()).render(nonce));
        }
    }
    for (m, cand) in report.candidates.iter().enumerate() {
        if !cand.code_valid {
            continue;
        }
        lines.push(MarkerEvent::new(MarkerKind::CodeValid).ids(m, None).render(nonce));
        for (i, &ok) in cand.golden.iter().enumerate() {
            let ev = if ok {
                MarkerEvent::new(MarkerKind::GtPass).ids(m, Some(i))
            } else {
                MarkerEvent::new(MarkerKind::GtFail).ids(m, Some(i)).payload("AssertionError()")
            };
            lines.push(ev.render(nonce));
        }
        for (i, &ok) in cand.hist.iter().enumerate() {
            let mut start = MarkerEvent::new(MarkerKind::AttackStart).ids(m, Some(i));
            if let Some(text) = hist_texts.and_then(|h| h.get(i)) {
                start = start.payload(python_repr(&python_repr(text)));
            }
            lines.push(start.render(nonce));
            let ev = if ok {
                MarkerEvent::new(MarkerKind::AttackPass).ids(m, Some(i))
            } else {
                MarkerEvent::new(MarkerKind::AttackFail).ids(m, Some(i)).payload("AssertionError()")
            };
            lines.push(ev.render(nonce));
        }
        for n in 0..shape.suites_per_candidate {
            let s = m * shape.suites_per_candidate + n;
            for (j, outcome) in cand.generated[n].iter().enumerate() {
                if !report.suites[s].slots[j].verdict.is_usable() {
                    continue;
                }
                let ev = if *outcome == Some(true) {
                    MarkerEvent::new(MarkerKind::GenPass).ids(s, Some(j))
                } else {
                    MarkerEvent::new(MarkerKind::GenFail).ids(s, Some(j)).payload("AssertionError()")
                };
                lines.push(ev.render(nonce));
            }
        }
    }
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Mimics the guest's `repr(str)`: single quotes unless the text contains a
/// single quote and no double quote.
pub fn python_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalOutcome {
    Pass,
    Timeout,
    Fail,
}

impl EvalOutcome {
    pub fn kind(self) -> MarkerKind {
        match self {
            EvalOutcome::Pass => MarkerKind::Pass,
            EvalOutcome::Timeout => MarkerKind::Timeout,
            EvalOutcome::Fail => MarkerKind::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub status: RunStatus,
    pub outcomes: Vec<EvalOutcome>,
    pub anomalies: Vec<String>,
}

/// Decodes evaluation-script stdout: the i-th PASS/TIMEOUT/FAIL marker belongs
/// to candidate i. Candidates without a marker decode as FAIL.
pub fn parse_eval_markers(stdout: &str, candidates: usize, nonce: &Nonce) -> EvalReport {
    let mut outcomes = Vec::with_capacity(candidates);
    let mut anomalies = Vec::new();
    for line in stdout.lines() {
        let ev = match parse_line(line, nonce) {
            LineParse::NotMarker => continue,
            LineParse::Anomaly(a) => {
                anomalies.push(a);
                continue;
            }
            LineParse::Marker(ev) => ev,
        };
        let outcome = match ev.kind {
            MarkerKind::Pass => EvalOutcome::Pass,
            MarkerKind::Timeout => EvalOutcome::Timeout,
            MarkerKind::Fail => EvalOutcome::Fail,
            other => {
                anomalies.push(format!("{other} in evaluation output"));
                continue;
            }
        };
        if outcomes.len() < candidates {
            outcomes.push(outcome);
        } else {
            anomalies.push("more outcomes than candidates".into());
        }
    }
    if outcomes.len() < candidates {
        anomalies.push(format!("{} candidates without an outcome", candidates - outcomes.len()));
        outcomes.resize(candidates, EvalOutcome::Fail);
    }
    EvalReport { status: RunStatus::Ok, outcomes, anomalies }
}

pub fn encode_eval_stdout(outcomes: &[EvalOutcome], nonce: &Nonce) -> String {
    outcomes.iter().map(|o| MarkerEvent::new(o.kind()).render(nonce) + "\n").collect()
}
