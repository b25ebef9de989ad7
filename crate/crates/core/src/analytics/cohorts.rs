//! User-level cohort comparisons.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{
    deep_sleep_edges, duration_edges, edge_labels, start_bin, AnalyticsError, CohortGroup, CohortReport, NamedTest,
    TestOutcome, UserRecord, START_BIN_LABELS,
};
use crate::geo::CountryResolution;
use crate::grammar::{SleepLog, PREFIX};
use crate::records::RawTweet;
use crate::stats::{self, histogram, mean, nearest_rank, normalize, quartile_split, CorrelationResult, MwuMode, Quartile, StatsError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cohort {
    Country(String),
    /// Users resolved to any other country; unresolved users are excluded.
    NotCountry(String),
}

impl Cohort {
    pub fn label(&self) -> String {
        match self {
            Cohort::Country(c) => c.clone(),
            Cohort::NotCountry(c) => format!("not-{c}"),
        }
    }

    pub fn contains(&self, r: &CountryResolution) -> bool {
        match (self, r.country.as_deref()) {
            (Cohort::Country(c), Some(x)) => x == c,
            (Cohort::NotCountry(c), Some(x)) => x != c,
            (_, None) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Duration,
    DeepSleep,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Duration => "duration",
            Metric::DeepSleep => "deep_sleep",
        }
    }

    pub fn of(self, u: &UserRecord) -> Option<f64> {
        match self {
            Metric::Duration => Some(u.avg_duration_minutes),
            Metric::DeepSleep => u.avg_deep_sleep_pct,
        }
    }

    fn edges(self) -> Vec<f64> {
        match self {
            Metric::Duration => duration_edges(),
            Metric::DeepSleep => deep_sleep_edges(),
        }
    }
}

fn group(label: &str, values: &[f64], edges: &[f64]) -> CohortGroup {
    CohortGroup {
        label: label.to_owned(),
        size: values.len(),
        mean: mean(values),
        distribution: normalize(&histogram(values, edges)),
    }
}

/// Distribution of per-user averages in two disjoint cohorts, and a
/// Mann-Whitney test between them.
pub fn country_compare(
    users: &[UserRecord],
    a: &Cohort,
    b: &Cohort,
    metric: Metric,
    mode: MwuMode,
) -> Result<CohortReport, AnalyticsError> {
    let (la, lb) = (a.label(), b.label());
    if users.iter().any(|u| a.contains(&u.country) && b.contains(&u.country)) {
        return Err(AnalyticsError::OverlappingCohorts(la, lb));
    }
    let pick = |c: &Cohort| -> Vec<f64> { users.iter().filter(|u| c.contains(&u.country)).filter_map(|u| metric.of(u)).collect() };
    let (va, vb) = (pick(a), pick(b));
    for (name, v) in [(&la, &va), (&lb, &vb)] {
        if v.len() < 2 {
            return Err(AnalyticsError::CohortTooSmall {
                name: name.clone(),
                size: v.len(),
                need: 2,
            });
        }
    }
    let edges = metric.edges();
    Ok(CohortReport {
        analysis: format!("country_{}_{}_vs_{}", metric.name(), la, lb),
        grouping: format!("country: {la} vs {lb}"),
        metric: metric.name().into(),
        population: va.len() + vb.len(),
        bin_labels: edge_labels(&edges),
        groups: vec![group(&la, &va, &edges), group(&lb, &vb, &edges)],
        tests: vec![NamedTest {
            name: format!("{}_{}_vs_{}", metric.name(), la, lb),
            outcome: TestOutcome::from_samples(&va, &vb, mode),
        }],
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresleepDenominator {
    /// Share of sleep logs preceded by a tweet in the window.
    #[default]
    PerNight,
    /// Share of local calendar days (of sleep start) with such a log.
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresleepConfig {
    pub window_minutes: i64,
    pub denominator: PresleepDenominator,
}

impl Default for PresleepConfig {
    fn default() -> Self {
        Self {
            window_minutes: 120,
            denominator: PresleepDenominator::PerNight,
        }
    }
}

/// Per-user probability of tweeting in `[start − window, start)`. Users with
/// no timeline tweets, or no anchored logs, get no value.
pub fn presleep_probabilities(logs: &[SleepLog], timelines: &[RawTweet], cfg: &PresleepConfig) -> BTreeMap<String, f64> {
    let mut times: HashMap<&str, Vec<DateTime<Utc>>> = HashMap::new();
    for t in timelines.iter().filter(|t| !t.text.contains(PREFIX)) {
        times.entry(&t.user_id).or_default().push(t.created_at);
    }
    for v in times.values_mut() {
        v.sort();
    }
    let window = Duration::minutes(cfg.window_minutes);
    let mut nights: BTreeMap<&str, Vec<(NaiveDate, bool)>> = BTreeMap::new();
    for l in logs {
        let (Some(a), Some(ts)) = (&l.anchor, times.get(l.user_id.as_str())) else {
            continue;
        };
        let lo = ts.partition_point(|t| *t < a.start_utc - window);
        let hit = lo < ts.len() && ts[lo] < a.start_utc;
        nights.entry(&l.user_id).or_default().push((a.start_local.date(), hit));
    }
    nights
        .into_iter()
        .map(|(uid, ns)| {
            let p = match cfg.denominator {
                PresleepDenominator::PerNight => ns.iter().filter(|n| n.1).count() as f64 / ns.len() as f64,
                PresleepDenominator::PerDay => {
                    let mut days: BTreeMap<NaiveDate, bool> = BTreeMap::new();
                    for (d, hit) in ns {
                        *days.entry(d).or_default() |= hit;
                    }
                    days.values().filter(|h| **h).count() as f64 / days.len() as f64
                }
            };
            (uid.to_owned(), p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrelationOutcome {
    Computed(CorrelationResult),
    NotComputable { reason: String },
}

impl CorrelationOutcome {
    pub fn result(&self) -> Option<&CorrelationResult> {
        match self {
            CorrelationOutcome::Computed(r) => Some(r),
            CorrelationOutcome::NotComputable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresleepReport {
    pub window_minutes: i64,
    pub denominator: PresleepDenominator,
    /// Users with both a probability and an average deep-sleep value.
    pub n_users: usize,
    pub correlation: CorrelationOutcome,
    pub quartiles: Option<CohortReport>,
    pub quartiles_note: Option<String>,
}

/// Fills `presleep_tweet_prob` on `users`, then correlates it with average
/// deep sleep and compares the top and bottom quartiles.
pub fn presleep_activity(
    users: &mut [UserRecord],
    timelines: &[RawTweet],
    logs: &[SleepLog],
    cfg: &PresleepConfig,
    mode: MwuMode,
) -> PresleepReport {
    let probs = presleep_probabilities(logs, timelines, cfg);
    for u in users.iter_mut() {
        u.presleep_tweet_prob = probs.get(&u.user_id).copied();
    }
    let pairs: BTreeMap<String, (f64, f64)> = users
        .iter()
        .filter_map(|u| Some((u.user_id.clone(), (u.presleep_tweet_prob?, u.avg_deep_sleep_pct?))))
        .collect();
    let xs: Vec<f64> = pairs.values().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.values().map(|p| p.1).collect();
    let correlation = match stats::pearson(&xs, &ys) {
        Ok(r) => CorrelationOutcome::Computed(r),
        Err(e) => CorrelationOutcome::NotComputable {
            reason: format!("not computable: {e}"),
        },
    };
    let metric: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.clone(), v.0)).collect();
    let (quartiles, quartiles_note) = match quartile_split(&metric) {
        Ok(split) => {
            let edges = deep_sleep_edges();
            let deep_of = |q: Quartile| split.members(q).map(|k| pairs[k].1).collect::<Vec<_>>();
            let groups: Vec<CohortGroup> = Quartile::ALL.iter().map(|&q| group(q.label(), &deep_of(q), &edges)).collect();
            let (top, bottom) = (deep_of(Quartile::Q4), deep_of(Quartile::Q1));
            let outcome = if top.is_empty() || bottom.is_empty() {
                TestOutcome::NotComputable {
                    reason: "an extreme quartile is empty".into(),
                }
            } else {
                TestOutcome::from_samples(&top, &bottom, mode)
            };
            let report = CohortReport {
                analysis: "presleep_quartiles".into(),
                grouping: format!(
                    "quartile of pre-sleep tweet probability (thresholds {:.4}, {:.4}, {:.4})",
                    split.thresholds[0], split.thresholds[1], split.thresholds[2]
                ),
                metric: "deep_sleep".into(),
                population: metric.len(),
                bin_labels: edge_labels(&edges),
                groups,
                tests: vec![NamedTest {
                    name: "deep_sleep_Q4_vs_Q1".into(),
                    outcome,
                }],
            };
            (Some(report), None)
        }
        Err(e) => (None, Some(format!("not computable: {e}"))),
    };
    PresleepReport {
        window_minutes: cfg.window_minutes,
        denominator: cfg.denominator,
        n_users: pairs.len(),
        correlation,
        quartiles,
        quartiles_note,
    }
}

/// Sleep-start bin proportions per quartile of tweets per day, plus a test
/// of average duration between the top and bottom quartiles. `country`
/// restricts the analysis to one resolved country.
pub fn activity_cohorts(
    users: &[UserRecord],
    logs: &[SleepLog],
    country: Option<&str>,
    mode: MwuMode,
) -> Result<CohortReport, AnalyticsError> {
    let selected: BTreeMap<&str, &UserRecord> = users
        .iter()
        .filter(|u| u.tweets_per_day.is_some())
        .filter(|u| country.is_none_or(|c| u.country.country.as_deref() == Some(c)))
        .map(|u| (u.user_id.as_str(), u))
        .collect();
    let name = match country {
        Some(c) => format!("activity_cohorts_{c}"),
        None => "activity_cohorts".to_owned(),
    };
    let metric: BTreeMap<&str, f64> = selected.iter().map(|(k, u)| (*k, u.tweets_per_day.unwrap())).collect();
    let split = quartile_split(&metric).map_err(|e| match e {
        StatsError::TooFew { need, got } => AnalyticsError::CohortTooSmall {
            name: name.clone(),
            size: got,
            need,
        },
        other => other.into(),
    })?;
    let mut bins = vec![vec![0f64; START_BIN_LABELS.len()]; 4];
    for l in logs {
        if let Some(q) = split.assignment.get(l.user_id.as_str()) {
            bins[*q as usize][start_bin(l)] += 1.0;
        }
    }
    let durations = |q: Quartile| split.members(q).map(|k| selected[k].avg_duration_minutes).collect::<Vec<_>>();
    let groups = Quartile::ALL
        .iter()
        .map(|&q| {
            let d = durations(q);
            CohortGroup {
                label: q.label().into(),
                size: d.len(),
                mean: mean(&d),
                distribution: normalize(&bins[q as usize]),
            }
        })
        .collect();
    let (top, bottom) = (durations(Quartile::Q4), durations(Quartile::Q1));
    let outcome = if top.is_empty() || bottom.is_empty() {
        TestOutcome::NotComputable {
            reason: "an extreme quartile is empty".into(),
        }
    } else {
        TestOutcome::from_samples(&top, &bottom, mode)
    };
    Ok(CohortReport {
        analysis: name,
        grouping: format!(
            "quartile of tweets per day (thresholds {:.4}, {:.4}, {:.4})",
            split.thresholds[0], split.thresholds[1], split.thresholds[2]
        ),
        metric: "sleep_start_bin".into(),
        population: metric.len(),
        bin_labels: START_BIN_LABELS.iter().map(|s| s.to_string()).collect(),
        groups,
        tests: vec![NamedTest {
            name: "duration_Q4_vs_Q1".into(),
            outcome,
        }],
    })
}

/// Median split on friends count (values at the median go low) and a test of
/// average duration between the halves.
pub fn friends_split(users: &[UserRecord], mode: MwuMode) -> Result<CohortReport, AnalyticsError> {
    let with: Vec<(&UserRecord, f64)> = users.iter().filter_map(|u| Some((u, u.friends_count? as f64))).collect();
    if with.len() < 4 {
        return Err(AnalyticsError::CohortTooSmall {
            name: "friends_split".into(),
            size: with.len(),
            need: 4,
        });
    }
    let mut sorted: Vec<f64> = with.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = nearest_rank(&sorted, 0.5);
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    let low: Vec<f64> = with.iter().filter(|p| p.1 <= median).map(|p| p.0.avg_duration_minutes).collect();
    let high: Vec<f64> = with.iter().filter(|p| p.1 > median).map(|p| p.0.avg_duration_minutes).collect();
    let edges = duration_edges();
    let outcome = if degenerate {
        TestOutcome::NotComputable {
            reason: "not computable: every user has the same friends count".into(),
        }
    } else {
        TestOutcome::from_samples(&low, &high, mode)
    };
    Ok(CohortReport {
        analysis: "friends_split".into(),
        grouping: format!("friends count at or below median {median} vs above"),
        metric: "duration".into(),
        population: with.len(),
        bin_labels: edge_labels(&edges),
        groups: vec![group("low", &low, &edges), group("high", &high, &edges)],
        tests: vec![NamedTest {
            name: "duration_low_vs_high".into(),
            outcome,
        }],
    })
}
