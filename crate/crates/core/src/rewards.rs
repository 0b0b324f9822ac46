//! Test validation classification and the code/test reward functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{parse_assertion, SuiteSource, TestSuite};
use crate::script::{CandidateReport, SlotVerdict, SuiteReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("report has {report} slots but the suite has {suite}")]
    ShapeMismatch { suite: usize, report: usize },
    #[error("no pass-rate signal available")]
    NoSignal,
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseValidation {
    Valid,
    WrongAnswerCorrected,
    Duplicate,
    ExecError,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub statuses: Vec<CaseValidation>,
    pub valid_fraction: f64,
    /// Every case that executed on the oracle, with wrong answers replaced by
    /// the oracle value. Order follows the suite.
    pub corrected_suite: TestSuite,
    /// Suite slot of each corrected case.
    pub corrected_slots: Vec<usize>,
}

/// Classifies each case of `suite` from the sandbox verdicts in `report`.
/// The denominator of `valid_fraction` is the declared suite size.
pub fn classify_validation(suite: &TestSuite, report: &SuiteReport) -> Result<ValidationSummary, RewardError> {
    if suite.len() != report.slots.len() {
        return Err(RewardError::ShapeMismatch { suite: suite.len(), report: report.slots.len() });
    }
    let mut statuses = Vec::with_capacity(suite.len());
    let mut corrected = Vec::new();
    let mut corrected_slots = Vec::new();
    for (j, (case, slot)) in suite.cases.iter().zip(&report.slots).enumerate() {
        let status = if !case.is_parsed() {
            CaseValidation::Malformed
        } else if case.is_duplicate() {
            CaseValidation::Duplicate
        } else {
            match slot.verdict {
                SlotVerdict::Valid => CaseValidation::Valid,
                SlotVerdict::WrongAnswer => CaseValidation::WrongAnswerCorrected,
                SlotVerdict::Duplicate => CaseValidation::Duplicate,
                SlotVerdict::ExecError | SlotVerdict::NotRun => CaseValidation::ExecError,
            }
        };
        if matches!(status, CaseValidation::Valid | CaseValidation::WrongAnswerCorrected) {
            let text = slot.corrected.as_deref().unwrap_or(&case.canonical);
            corrected.push(parse_assertion(text));
            corrected_slots.push(j);
        }
        statuses.push(status);
    }
    let valid = statuses.iter().filter(|s| **s == CaseValidation::Valid).count();
    let valid_fraction = if suite.is_empty() { 0.0 } else { valid as f64 / suite.len() as f64 };
    let mut corrected_suite = TestSuite::new(corrected, SuiteSource::Generated);
    corrected_suite.owner_candidate = suite.owner_candidate;
    Ok(ValidationSummary { statuses, valid_fraction, corrected_suite, corrected_slots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRates {
    pub pass_hist: Option<f64>,
    pub pass_new_per_suite: Vec<Option<f64>>,
}

impl PassRates {
    /// Pass rates of one candidate: historical tests, and each of its suites
    /// over the slots that were announced by validation.
    pub fn from_candidate(report: &CandidateReport) -> Self {
        let pass_hist = fraction(report.hist.iter().map(|&b| Some(b)));
        let pass_new_per_suite = report.generated.iter().map(|suite| fraction(suite.iter().copied())).collect();
        Self { pass_hist, pass_new_per_suite }
    }

    /// Mean over the suites that had usable tests.
    pub fn mean_pass_new(&self) -> Option<f64> {
        mean(self.pass_new_per_suite.iter().flatten().copied())
    }
}

fn fraction(it: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut pass, mut total) = (0usize, 0usize);
    for b in it.flatten() {
        total += 1;
        pass += b as usize;
    }
    (total > 0).then(|| pass as f64 / total as f64)
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in it {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Code reward: the historical pass rate and the mean new-test pass rate,
/// averaged when both exist.
pub fn code_reward(rates: &PassRates) -> Result<f64, RewardError> {
    match (rates.pass_hist, rates.mean_pass_new()) {
        (Some(h), Some(n)) => Ok(0.5 * (h + n)),
        (None, Some(n)) => Ok(n),
        // A candidate with history but no usable new tests is scored on history alone.
        (Some(h), None) => Ok(h),
        (None, None) => Err(RewardError::NoSignal),
    }
}

/// Adversarial reward for one suite against one candidate.
pub fn adversarial_reward(pass_hist: Option<f64>, pass_new: Option<f64>) -> f64 {
    match (pass_hist, pass_new) {
        (_, None) => 0.0,
        (Some(h), Some(n)) => 0.5 * (h - n + 1.0),
        (None, Some(n)) => 1.0 - n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl RewardConfig {
    pub fn new(alpha: f64) -> Result<Self, RewardError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self { alpha })
        } else {
            Err(RewardError::BadAlpha(alpha))
        }
    }
}

pub fn test_reward(val: f64, adv: f64, cfg: &RewardConfig) -> f64 {
    cfg.alpha * val + (1.0 - cfg.alpha) * adv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::parse_suite;
    use crate::script::SlotReport;

    fn slot(verdict: SlotVerdict, corrected: Option<&str>) -> SlotReport {
        SlotReport { verdict, corrected: corrected.map(str::to_string) }
    }

    #[test]
    fn code_reward_branches() {
        let r = PassRates { pass_hist: Some(0.5), pass_new_per_suite: vec![Some(0.7), Some(0.7)] };
        assert!((code_reward(&r).unwrap() - 0.6).abs() < 1e-15);
        let r = PassRates { pass_hist: None, pass_new_per_suite: vec![Some(1.0)] };
        assert_eq!(code_reward(&r), Ok(1.0));
        let r = PassRates { pass_hist: None, pass_new_per_suite: vec![None, None] };
        assert_eq!(code_reward(&r), Err(RewardError::NoSignal));
    }

    #[test]
    fn adversarial_reward_cases() {
        assert!((adversarial_reward(Some(0.8), Some(0.3)) - 0.75).abs() < 1e-15);
        assert_eq!(adversarial_reward(None, Some(1.0)), 0.0);
        assert_eq!(adversarial_reward(Some(0.4), None), 0.0);
    }

    #[test]
    fn test_reward_mixes() {
        assert_eq!(test_reward(1.0, 0.75, &RewardConfig::default()), 0.875);
        assert_eq!(test_reward(0.3, 0.9, &RewardConfig::new(1.0).unwrap()), 0.3);
        assert_eq!(test_reward(0.3, 0.9, &RewardConfig::new(0.0).unwrap()), 0.9);
        assert!(RewardConfig::new(1.5).is_err());
    }

    #[test]
    fn classification_rules() {
        let suite = parse_suite("assert f(1) == 2\nassert f(2) == 9\nassert g(3) == 1\nassert f(1) == 2\nnot an assert", 5);
        let report = SuiteReport {
            invalid_count: Some(4),
            slots: vec![
                slot(SlotVerdict::Valid, Some("assert f(1) == 2")),
                slot(SlotVerdict::WrongAnswer, Some("assert f(2) == 3")),
                slot(SlotVerdict::ExecError, None),
                slot(SlotVerdict::NotRun, None),
                slot(SlotVerdict::NotRun, None),
            ],
        };
        let v = classify_validation(&suite, &report).unwrap();
        assert_eq!(
            v.statuses,
            vec![
                CaseValidation::Valid,
                CaseValidation::WrongAnswerCorrected,
                CaseValidation::ExecError,
                CaseValidation::Duplicate,
                CaseValidation::Malformed,
            ]
        );
        assert!((v.valid_fraction - 0.2).abs() < 1e-15);
        let texts: Vec<&str> = v.corrected_suite.cases.iter().map(|c| c.canonical.as_str()).collect();
        assert_eq!(texts, vec!["assert f(1) == 2", "assert f(2) == 3"]);
        assert_eq!(v.corrected_slots, vec![0, 1]);
    }

    #[test]
    fn one_wrong_answer_in_five() {
        let suite = parse_suite("assert f(1) == 1\nassert f(2) == 2\nassert f(3) == 3\nassert f(4) == 4\nassert f(5) == 0", 5);
        let mut slots: Vec<SlotReport> = suite.cases.iter().map(|c| slot(SlotVerdict::Valid, Some(&c.canonical))).collect();
        slots[4] = slot(SlotVerdict::WrongAnswer, Some("assert f(5) == 5"));
        let v = classify_validation(&suite, &SuiteReport { invalid_count: Some(1), slots }).unwrap();
        assert!((v.valid_fraction - 0.8).abs() < 1e-15);
        assert_eq!(v.corrected_suite.len(), 5);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let suite = parse_suite("assert f(1) == 1", 2);
        let report = SuiteReport { invalid_count: None, slots: vec![SlotReport::default()] };
        assert_eq!(classify_validation(&suite, &report), Err(RewardError::ShapeMismatch { suite: 2, report: 1 }));
    }

    #[test]
    fn pass_rates_skip_unannounced_slots() {
        let report = CandidateReport {
            code_valid: true,
            golden: vec![],
            hist: vec![true, false],
            generated: vec![vec![Some(true), None, Some(false), Some(true)], vec![None, None, None, None]],
        };
        let r = PassRates::from_candidate(&report);
        assert_eq!(r.pass_hist, Some(0.5));
        assert_eq!(r.pass_new_per_suite[1], None);
        assert!((r.pass_new_per_suite[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
