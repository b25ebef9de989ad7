//! Analyses over filtered sleep logs, user profiles and timelines.
//!
//! "Sleep quality" means the deep-sleep percentage throughout.

mod clock;
mod cohorts;
mod suite;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::CountryResolution;
use crate::grammar::SleepLog;
use crate::records::RawTweet;
use crate::stats::{self, mean, StatsError, TestResult, LOG2_BIN_LABELS};

pub use clock::{duration_by_start_bin, sleep_clock, wake_heatmap, SleepClock, StartBinReport, StartBinRow, WakeHeatmap, WEEKDAYS};
pub use cohorts::{
    CorrelationOutcome,
    activity_cohorts, country_compare, friends_split, presleep_activity, presleep_probabilities, Cohort, Metric, PresleepConfig,
    PresleepDenominator, PresleepReport,
};
pub use suite::{run_analyses, AnalysisConfig, AnalysisInputs, ReportBundle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("cohort `{name}` has {size} users, need at least {need}")]
    CohortTooSmall { name: String, size: usize, need: usize },
    #[error("cohorts `{0}` and `{1}` overlap")]
    OverlappingCohorts(String, String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Three-hour sleep-start bins: `[00,03)`, `[03,06)`, …, `[21,24)`.
pub const START_BIN_LABELS: [&str; 8] = ["00-03", "03-06", "06-09", "09-12", "12-15", "15-18", "18-21", "21-24"];

pub fn start_bin(log: &SleepLog) -> usize {
    use chrono::Timelike;
    log.start_civil.hour() as usize / 3
}

/// Edges of the duration histograms, in minutes.
pub fn duration_edges() -> Vec<f64> {
    (0..=10).map(|k| 120.0 + 60.0 * k as f64).collect()
}

pub fn deep_sleep_edges() -> Vec<f64> {
    (0..=10).map(|k| 10.0 * k as f64).collect()
}

fn edge_labels(edges: &[f64]) -> Vec<String> {
    edges.windows(2).map(|w| format!("{}-{}", w[0], w[1])).collect()
}

/// Profile fields taken from a user's most recent tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub friends_count: Option<u64>,
    pub statuses_count: Option<u64>,
    pub account_created_at: Option<DateTime<Utc>>,
    pub last_tweet_at: DateTime<Utc>,
}

pub fn profiles_from_tweets(tweets: &[RawTweet]) -> BTreeMap<String, UserProfile> {
    let mut out: BTreeMap<String, UserProfile> = BTreeMap::new();
    for t in tweets {
        let newer = out.get(&t.user_id).is_none_or(|p| t.created_at >= p.last_tweet_at);
        if newer {
            out.insert(
                t.user_id.clone(),
                UserProfile {
                    user_id: t.user_id.clone(),
                    friends_count: t.friends_count,
                    statuses_count: t.statuses_count,
                    account_created_at: t.account_created_at,
                    last_tweet_at: t.created_at,
                },
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TweetsPerDayMode {
    /// `statuses_count / max(1, account age in whole days at the last tweet)`.
    #[default]
    Profile,
    /// Timeline tweets over the whole days they span (at least one).
    Observed,
}

/// Tweets per day from a profile. Absent when either profile field is.
pub fn profile_tweets_per_day(p: &UserProfile) -> Option<f64> {
    let statuses = p.statuses_count?;
    let created = p.account_created_at?;
    let days = (p.last_tweet_at - created).num_days().max(1);
    Some(statuses as f64 / days as f64)
}

pub fn observed_tweets_per_day(timeline: &[DateTime<Utc>]) -> Option<f64> {
    let first = timeline.iter().min()?;
    let last = timeline.iter().max()?;
    let days = (*last - *first).num_days().max(1);
    Some(timeline.len() as f64 / days as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub n_logs: usize,
    pub avg_duration_minutes: f64,
    pub avg_deep_sleep_pct: Option<f64>,
    pub country: CountryResolution,
    pub tweets_per_day: Option<f64>,
    pub friends_count: Option<u64>,
    /// Filled in by the pre-sleep analysis.
    pub presleep_tweet_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub users: Vec<UserRecord>,
    pub n_logs: usize,
    /// Mean over all logs.
    pub overall_mean_duration: Option<f64>,
    /// Mean of the per-user means.
    pub mean_of_user_means_duration: Option<f64>,
    pub overall_mean_deep_sleep: Option<f64>,
    pub mean_of_user_means_deep_sleep: Option<f64>,
}

/// Per-user means over each user's logs, sorted by user id. Users without a
/// resolution are recorded as unresolved; missing profile data leaves the
/// derived fields empty.
pub fn per_user_aggregates(
    logs: &[SleepLog],
    resolutions: &BTreeMap<String, CountryResolution>,
    profiles: &BTreeMap<String, UserProfile>,
) -> Aggregates {
    let mut by_user: BTreeMap<&str, Vec<&SleepLog>> = BTreeMap::new();
    for l in logs {
        by_user.entry(&l.user_id).or_default().push(l);
    }
    let users: Vec<UserRecord> = by_user
        .into_iter()
        .map(|(uid, ls)| {
            let durations: Vec<f64> = ls.iter().map(|l| l.duration_minutes as f64).collect();
            let deep: Vec<f64> = ls.iter().filter_map(|l| l.deep_sleep_pct.map(f64::from)).collect();
            let profile = profiles.get(uid);
            UserRecord {
                user_id: uid.to_owned(),
                n_logs: ls.len(),
                avg_duration_minutes: mean(&durations).expect("at least one log"),
                avg_deep_sleep_pct: mean(&deep),
                country: resolutions
                    .get(uid)
                    .cloned()
                    .unwrap_or_else(|| CountryResolution::unresolved(uid)),
                tweets_per_day: profile.and_then(profile_tweets_per_day),
                friends_count: profile.and_then(|p| p.friends_count),
                presleep_tweet_prob: None,
            }
        })
        .collect();
    let all_dur: Vec<f64> = logs.iter().map(|l| l.duration_minutes as f64).collect();
    let all_deep: Vec<f64> = logs.iter().filter_map(|l| l.deep_sleep_pct.map(f64::from)).collect();
    let user_dur: Vec<f64> = users.iter().map(|u| u.avg_duration_minutes).collect();
    let user_deep: Vec<f64> = users.iter().filter_map(|u| u.avg_deep_sleep_pct).collect();
    Aggregates {
        n_logs: logs.len(),
        overall_mean_duration: mean(&all_dur),
        mean_of_user_means_duration: mean(&user_dur),
        overall_mean_deep_sleep: mean(&all_deep),
        mean_of_user_means_deep_sleep: mean(&user_deep),
        users,
    }
}

/// Outcome of a named hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TestOutcome {
    Computed(TestResult),
    NotComputable { reason: String },
}

impl TestOutcome {
    pub fn from_samples(a: &[f64], b: &[f64], mode: stats::MwuMode) -> Self {
        match stats::mann_whitney_u(a, b, mode) {
            Ok(r) => TestOutcome::Computed(r),
            Err(e) => TestOutcome::NotComputable { reason: e.to_string() },
        }
    }

    pub fn result(&self) -> Option<&TestResult> {
        match self {
            TestOutcome::Computed(r) => Some(r),
            TestOutcome::NotComputable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortGroup {
    pub label: String,
    pub size: usize,
    /// Mean of the compared per-user metric within the group.
    pub mean: Option<f64>,
    /// Normalized distribution over the report's bins.
    pub distribution: Vec<f64>,
}

/// Users partitioned into labelled groups, with the tests run between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub analysis: String,
    pub grouping: String,
    pub metric: String,
    pub population: usize,
    pub bin_labels: Vec<String>,
    pub groups: Vec<CohortGroup>,
    pub tests: Vec<NamedTest>,
}

impl CohortReport {
    pub fn group(&self, label: &str) -> Option<&CohortGroup> {
        self.groups.iter().find(|g| g.label == label)
    }

    pub fn test(&self, name: &str) -> Option<&TestOutcome> {
        self.tests.iter().find(|t| t.name == name).map(|t| &t.outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub bin: String,
    pub users: u64,
    /// Share of users, rounded to a whole percent.
    pub percent: u64,
}

/// Users per logarithmic bin of their log count, through the highest
/// non-empty bin.
pub fn frequency_table(users: &[UserRecord]) -> Vec<FrequencyRow> {
    let mut counts = [0u64; LOG2_BIN_LABELS.len()];
    for u in users {
        if let Ok(k) = stats::log2_bin(u.n_logs as u64) {
            counts[k] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let Some(last) = counts.iter().rposition(|&c| c > 0) else {
        return Vec::new();
    };
    counts[..=last]
        .iter()
        .zip(LOG2_BIN_LABELS)
        .map(|(&c, label)| FrequencyRow {
            bin: label.to_owned(),
            users: c,
            percent: ((c as f64 * 100.0) / total as f64).round() as u64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{ClockStyle, Notation, Separator};
    use chrono::{NaiveTime, TimeZone};

    pub(crate) fn log(user: &str, minutes: u32, deep: Option<u8>) -> SleepLog {
        SleepLog {
            tweet_id: format!("{user}-{minutes}"),
            user_id: user.into(),
            start_civil: NaiveTime::from_hms_opt(23, 0, 0).unwrap(),
            end_civil: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            anchor: None,
            duration_minutes: minutes,
            duration_inconsistent: false,
            deep_sleep_pct: deep,
            notation: Notation {
                clock: ClockStyle::H24,
                separator: Separator::Colon,
            },
        }
    }

    fn user(id: &str, n_logs: usize) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            n_logs,
            avg_duration_minutes: 400.0,
            avg_deep_sleep_pct: None,
            country: CountryResolution::unresolved(id),
            tweets_per_day: None,
            friends_count: None,
            presleep_tweet_prob: None,
        }
    }

    #[test]
    fn single_user_mean() {
        let a = per_user_aggregates(&[log("u", 360, None), log("u", 420, None)], &BTreeMap::new(), &BTreeMap::new());
        assert_eq!(a.users.len(), 1);
        assert_eq!(a.users[0].avg_duration_minutes, 390.0);
        assert_eq!(a.users[0].avg_deep_sleep_pct, None);
        assert_eq!(a.users[0].country.method, crate::geo::ResolutionMethod::Unresolved);
    }

    #[test]
    fn overall_mean_weights_logs_and_mean_of_means_weights_users() {
        let logs = [log("a", 300, Some(40)), log("b", 480, Some(60)), log("b", 480, None), log("b", 480, None)];
        let a = per_user_aggregates(&logs, &BTreeMap::new(), &BTreeMap::new());
        assert_eq!(a.overall_mean_duration, Some(435.0));
        assert_eq!(a.mean_of_user_means_duration, Some(390.0));
        assert_eq!(a.overall_mean_deep_sleep, Some(50.0));
    }

    #[test]
    fn tweets_per_day_from_profile() {
        let created = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        let p = UserProfile {
            user_id: "u".into(),
            friends_count: None,
            statuses_count: Some(3650),
            account_created_at: Some(created),
            last_tweet_at: created + chrono::Duration::days(365),
        };
        assert_eq!(profile_tweets_per_day(&p), Some(10.0));
        let fresh = UserProfile {
            last_tweet_at: created + chrono::Duration::hours(3),
            ..p.clone()
        };
        assert_eq!(profile_tweets_per_day(&fresh), Some(3650.0));
        let bare = UserProfile {
            statuses_count: None,
            ..p
        };
        assert_eq!(profile_tweets_per_day(&bare), None);
    }

    #[test]
    fn frequency_example() {
        let users: Vec<_> = [1, 1, 2, 5].iter().enumerate().map(|(i, &n)| user(&i.to_string(), n)).collect();
        let rows = frequency_table(&users);
        let got: Vec<_> = rows.iter().map(|r| (r.bin.as_str(), r.users, r.percent)).collect();
        assert_eq!(got, [("1", 2, 50), ("2-3", 1, 25), ("4-7", 1, 25)]);
        assert!(frequency_table(&[]).is_empty());
    }

    #[test]
    fn start_bins() {
        let mut l = log("u", 400, None);
        l.start_civil = NaiveTime::from_hms_opt(19, 30, 0).unwrap();
        assert_eq!(START_BIN_LABELS[start_bin(&l)], "18-21");
    }
}
