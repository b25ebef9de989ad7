//! Scores pipeline output against a corpus's ground truth.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Label, SynthConfig, TruthRecord, UserTruth};
use crate::analytics::sleep_clock;
use crate::grammar::SleepLog;
use crate::ledger::RejectRecord;
use crate::stats::mean;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("reject record refers to line {0}, which is not in the ground truth")]
    UnknownSeq(u64),
    #[error("output refers to tweet `{0}`, which is not in the ground truth (or was already accounted for)")]
    UnknownTweet(String),
}

pub const KEPT: &str = "KEPT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    /// Tweets whose true class this is.
    pub support: u64,
    pub predicted: u64,
    pub true_positive: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub parameter: String,
    pub planted: f64,
    pub recovered: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_truth: u64,
    /// Keyed by `KEPT` or a reject reason.
    pub classes: BTreeMap<String, ClassScore>,
    /// Share of valid logs kept, per notation.
    pub notation_recall: BTreeMap<String, Option<f64>>,
    /// Kept logs whose fields differ from the truth.
    pub field_mismatches: u64,
    /// Truth records that no output accounts for.
    pub unaccounted: u64,
    pub recovery: Vec<Recovery>,
}

impl ScoreReport {
    pub fn is_perfect(&self) -> bool {
        self.field_mismatches == 0
            && self.unaccounted == 0
            && self
                .classes
                .values()
                .all(|c| c.support == 0 && c.predicted == 0 || c.precision == Some(1.0) && c.recall == Some(1.0))
    }
}

fn truth_class(t: &TruthRecord) -> String {
    match (t.label, t.reason) {
        (Label::Valid, _) => KEPT.into(),
        (Label::Invalid, Some(r)) => r.as_str().into(),
        (Label::Invalid, None) => "UNLABELED".into(),
    }
}

fn fields_match(t: &TruthRecord, log: &SleepLog) -> bool {
    let Some(f) = &t.true_fields else { return false };
    let anchored = log
        .anchor
        .as_ref()
        .is_none_or(|a| a.start_local == f.start_local && a.end_local == f.end_local);
    log.user_id == t.user_id
        && log.start_civil == f.start_local.time()
        && log.end_civil == f.end_local.time()
        && log.duration_minutes == f.duration_minutes
        && log.deep_sleep_pct == f.deep_sleep_pct
        && log.notation == f.notation
        && !log.duration_inconsistent
        && anchored
}

/// Matches outputs to truth: rejects carrying a line number by that number,
/// everything else by tweet id (first unmatched line with that id, which is
/// the copy deduplication keeps).
pub fn score(
    truth: &[TruthRecord],
    users: &[UserTruth],
    cfg: &SynthConfig,
    kept: &[SleepLog],
    rejects: &[RejectRecord],
) -> Result<ScoreReport, ScoreError> {
    let by_seq: HashMap<u64, usize> = truth.iter().enumerate().map(|(i, t)| (t.seq, i)).collect();
    let mut predicted: Vec<Option<String>> = vec![None; truth.len()];
    for r in rejects.iter().filter(|r| r.seq.is_some()) {
        let seq = r.seq.unwrap();
        let &i = by_seq.get(&seq).ok_or(ScoreError::UnknownSeq(seq))?;
        predicted[i] = Some(r.reason.as_str().into());
    }
    let mut by_id: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in truth.iter().enumerate().rev() {
        if predicted[i].is_none() {
            by_id.entry(&t.tweet_id).or_default().push(i);
        }
    }
    let mut claim = |id: &str| -> Result<usize, ScoreError> {
        by_id
            .get_mut(id)
            .and_then(Vec::pop)
            .ok_or_else(|| ScoreError::UnknownTweet(id.to_owned()))
    };
    let mut field_mismatches = 0;
    for r in rejects.iter().filter(|r| r.seq.is_none()) {
        let id = r.tweet_id.as_deref().unwrap_or_default();
        let i = claim(id)?;
        predicted[i] = Some(r.reason.as_str().into());
    }
    for log in kept {
        let i = claim(&log.tweet_id)?;
        predicted[i] = Some(KEPT.into());
        if !fields_match(&truth[i], log) {
            field_mismatches += 1;
        }
    }

    let mut classes: BTreeMap<String, ClassScore> = BTreeMap::new();
    let mut notation: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut unaccounted = 0;
    for (t, p) in truth.iter().zip(&predicted) {
        let actual = truth_class(t);
        classes.entry(actual.clone()).or_default().support += 1;
        if let Some(p) = p {
            let c = classes.entry(p.clone()).or_default();
            c.predicted += 1;
            if *p == actual {
                c.true_positive += 1;
            }
        } else {
            unaccounted += 1;
        }
        if t.label == Label::Valid {
            let f = t.true_fields.as_ref().expect("valid logs carry fields");
            let e = notation.entry(f.notation.label().to_owned()).or_default();
            e.0 += 1;
            if p.as_deref() == Some(KEPT) {
                e.1 += 1;
            }
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    for c in classes.values_mut() {
        c.precision = ratio(c.true_positive, c.predicted);
        c.recall = ratio(c.true_positive, c.support);
    }

    let country: HashMap<&str, &str> = users.iter().map(|u| (u.user_id.as_str(), u.country.as_str())).collect();
    let recovered = |planted: f64, got: Option<f64>, name: String| Recovery {
        parameter: name,
        planted,
        recovered: got,
        abs_error: got.map(|g| (g - planted).abs()),
    };
    let mut recovery = vec![recovered(
        cfg.start_mixture.night,
        sleep_clock(kept).start_share_22_03,
        "start_share_22_03".into(),
    )];
    for c in &cfg.countries {
        let durations: Vec<f64> = kept
            .iter()
            .filter(|l| country.get(l.user_id.as_str()) == Some(&c.code.as_str()))
            .map(|l| l.duration_minutes as f64)
            .collect();
        recovery.push(recovered(c.mean_duration, mean(&durations), format!("mean_duration_{}", c.code)));
    }

    Ok(ScoreReport {
        n_truth: truth.len() as u64,
        classes,
        notation_recall: notation.into_iter().map(|(k, (n, hit))| (k, ratio(hit, n))).collect(),
        field_mismatches,
        unaccounted,
        recovery,
    })
}
