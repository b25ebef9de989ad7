//! Runs every analysis and gathers tables, figures and a JSON summary.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    activity_cohorts, country_compare, duration_by_start_bin, frequency_table, friends_split, observed_tweets_per_day,
    per_user_aggregates, presleep_activity, profiles_from_tweets, sleep_clock, wake_heatmap, AnalyticsError, Cohort, CohortReport,
    Metric, NamedTest, PresleepConfig, TestOutcome, TweetsPerDayMode, UserRecord, WEEKDAYS,
};
use crate::geo::CountryResolution;
use crate::grammar::SleepLog;
use crate::records::RawTweet;
use crate::report::{fmt_f64, fmt_opt, render_svg, write_file, FigureKind, FigureMatrix, ReportError, Table};
use crate::stats::MwuMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub mwu_mode: MwuMode,
    pub presleep: PresleepConfig,
    pub tweets_per_day: TweetsPerDayMode,
    /// The two countries compared head to head; the first is also compared
    /// against all other resolved users.
    pub country_a: String,
    pub country_b: String,
    /// Countries for which the activity cohorts are re-run on their own.
    pub activity_countries: Vec<String>,
    /// Re-run the cohort analyses on users with at least this many logs.
    pub robustness_min_logs: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mwu_mode: MwuMode::Auto,
            presleep: PresleepConfig::default(),
            tweets_per_day: TweetsPerDayMode::Profile,
            country_a: "JP".into(),
            country_b: "US".into(),
            activity_countries: vec!["JP".into(), "US".into()],
            robustness_min_logs: Some(5),
        }
    }
}

pub struct AnalysisInputs<'a> {
    /// Filtered logs.
    pub logs: &'a [SleepLog],
    /// Tweets carrying profile metadata (typically the deduplicated input).
    pub tweets: &'a [RawTweet],
    pub resolutions: &'a [CountryResolution],
    /// General (non-log) tweets per user; without them the pre-sleep
    /// analysis is skipped.
    pub timelines: Option<&'a [RawTweet]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub tables: Vec<Table>,
    pub figures: Vec<FigureMatrix>,
    pub summary: Value,
}

fn test_row(analysis: &str, t: &NamedTest) -> Vec<String> {
    match &t.outcome {
        TestOutcome::Computed(r) => vec![
            analysis.into(),
            t.name.clone(),
            "computed".into(),
            serde_json::to_value(r.method).unwrap().as_str().unwrap().to_owned(),
            r.n1.to_string(),
            r.n2.to_string(),
            fmt_f64(r.u_statistic),
            format!("{:.6e}", r.p_two_sided),
            fmt_f64(r.mean_diff),
            fmt_f64(r.cohens_d),
            String::new(),
        ],
        TestOutcome::NotComputable { reason } => {
            let mut row = vec![analysis.into(), t.name.clone(), "not_computable".into()];
            row.extend(std::iter::repeat_n(String::new(), 7));
            row.push(reason.clone());
            row
        }
    }
}

fn cohort_table(r: &CohortReport) -> Table {
    let mut header = vec!["group", "size", "mean"];
    header.extend(r.bin_labels.iter().map(String::as_str));
    let mut t = Table::new(r.analysis.clone(), &header);
    for g in &r.groups {
        let mut row = vec![g.label.clone(), g.size.to_string(), fmt_opt(g.mean)];
        row.extend(g.distribution.iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    t
}

fn cohort_figure(r: &CohortReport) -> FigureMatrix {
    let by_bin = r.metric == "sleep_start_bin";
    FigureMatrix {
        id: r.analysis.clone(),
        title: r.grouping.clone(),
        kind: if by_bin { FigureKind::GroupedBars } else { FigureKind::Histogram },
        x_label: if by_bin {
            "Cohort".into()
        } else if r.metric == "duration" {
            "Average sleep duration per user (minutes)".into()
        } else {
            "Average deep sleep per user (%)".into()
        },
        y_label: "Share".into(),
        row_labels: r.groups.iter().map(|g| g.label.clone()).collect(),
        col_labels: r.bin_labels.clone(),
        values: r.groups.iter().map(|g| g.distribution.clone()).collect(),
        highlight_rows: Vec::new(),
    }
}

struct Collector {
    tables: Vec<Table>,
    figures: Vec<FigureMatrix>,
    tests: Table,
    cohorts: BTreeMap<String, Value>,
    skipped: BTreeMap<String, String>,
    suffix: String,
}

impl Collector {
    fn cohort(&mut self, name: &str, r: Result<CohortReport, AnalyticsError>) {
        match r {
            Ok(mut r) => {
                r.analysis.push_str(&self.suffix);
                for t in &r.tests {
                    self.tests.push(test_row(&r.analysis, t));
                }
                self.tables.push(cohort_table(&r));
                if r.groups.iter().any(|g| g.distribution.iter().any(|v| *v > 0.0)) {
                    self.figures.push(cohort_figure(&r));
                }
                self.cohorts.insert(r.analysis.clone(), serde_json::to_value(&r).unwrap());
            }
            Err(e) => {
                self.skipped.insert(format!("{name}{}", self.suffix), e.to_string());
            }
        }
    }
}

fn cohort_analyses(c: &mut Collector, users: &mut [UserRecord], logs: &[SleepLog], inputs: &AnalysisInputs, cfg: &AnalysisConfig) -> Value {
    let (a, b) = (Cohort::Country(cfg.country_a.clone()), Cohort::Country(cfg.country_b.clone()));
    let rest = Cohort::NotCountry(cfg.country_a.clone());
    for metric in [Metric::Duration, Metric::DeepSleep] {
        let name = format!("country_{}", metric.name());
        c.cohort(&name, country_compare(users, &a, &b, metric, cfg.mwu_mode));
        c.cohort(&format!("{name}_rest"), country_compare(users, &a, &rest, metric, cfg.mwu_mode));
    }
    let presleep = match inputs.timelines {
        Some(tl) => {
            let r = presleep_activity(users, tl, logs, &cfg.presleep, cfg.mwu_mode);
            let mut t = Table::new(format!("presleep{}", c.suffix), &["user_id", "presleep_tweet_prob", "avg_deep_sleep_pct"]);
            for u in users.iter().filter(|u| u.presleep_tweet_prob.is_some()) {
                t.push(vec![u.user_id.clone(), fmt_opt(u.presleep_tweet_prob), fmt_opt(u.avg_deep_sleep_pct)]);
            }
            c.tables.push(t);
            match &r.quartiles {
                Some(q) => c.cohort("presleep_quartiles", Ok(q.clone())),
                None => {
                    c.skipped.insert(format!("presleep_quartiles{}", c.suffix), r.quartiles_note.clone().unwrap_or_default());
                }
            }
            json!({
                "window_minutes": r.window_minutes,
                "denominator": r.denominator,
                "n_users": r.n_users,
                "correlation": r.correlation,
            })
        }
        None => {
            c.skipped.insert(format!("presleep{}", c.suffix), "no timelines supplied".into());
            Value::Null
        }
    };
    c.cohort("activity_cohorts", activity_cohorts(users, logs, None, cfg.mwu_mode));
    for country in &cfg.activity_countries {
        c.cohort(&format!("activity_cohorts_{country}"), activity_cohorts(users, logs, Some(country), cfg.mwu_mode));
    }
    c.cohort("friends_split", friends_split(users, cfg.mwu_mode));
    presleep
}

fn users_table(name: &str, users: &[UserRecord]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "user_id",
            "n_logs",
            "avg_duration_minutes",
            "avg_deep_sleep_pct",
            "country",
            "method",
            "tweets_per_day",
            "friends_count",
            "presleep_tweet_prob",
        ],
    );
    for u in users {
        t.push(vec![
            u.user_id.clone(),
            u.n_logs.to_string(),
            fmt_f64(u.avg_duration_minutes),
            fmt_opt(u.avg_deep_sleep_pct),
            u.country.country.clone().unwrap_or_default(),
            serde_json::to_value(u.country.method).unwrap().as_str().unwrap().to_owned(),
            fmt_opt(u.tweets_per_day),
            u.friends_count.map(|f| f.to_string()).unwrap_or_default(),
            fmt_opt(u.presleep_tweet_prob),
        ]);
    }
    t
}

/// Runs all analyses. Output order and content depend only on the inputs.
pub fn run_analyses(inputs: &AnalysisInputs, cfg: &AnalysisConfig) -> ReportBundle {
    let logs = inputs.logs;
    let resolutions: BTreeMap<String, CountryResolution> =
        inputs.resolutions.iter().map(|r| (r.user_id.clone(), r.clone())).collect();
    let profiles = profiles_from_tweets(inputs.tweets);
    let agg = per_user_aggregates(logs, &resolutions, &profiles);
    let mut users = agg.users.clone();
    if cfg.tweets_per_day == TweetsPerDayMode::Observed {
        let mut times: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for t in inputs.timelines.unwrap_or_default() {
            times.entry(&t.user_id).or_default().push(t.created_at);
        }
        for u in &mut users {
            u.tweets_per_day = times.get(u.user_id.as_str()).and_then(|ts| observed_tweets_per_day(ts));
        }
    }

    let mut c = Collector {
        tables: Vec::new(),
        figures: Vec::new(),
        tests: Table::new(
            "tests",
            &["analysis", "test", "status", "method", "n1", "n2", "u", "p_two_sided", "mean_diff", "cohens_d", "note"],
        ),
        cohorts: BTreeMap::new(),
        skipped: BTreeMap::new(),
        suffix: String::new(),
    };

    let freq = frequency_table(&users);
    let mut t = Table::new("frequency", &["bin", "users", "percent"]);
    for r in &freq {
        t.push(vec![r.bin.clone(), r.users.to_string(), r.percent.to_string()]);
    }
    c.tables.push(t);
    if !freq.is_empty() {
        let total: f64 = freq.iter().map(|r| r.users as f64).sum();
        c.figures.push(FigureMatrix {
            id: "frequency".into(),
            title: "Sleep logs per user".into(),
            kind: FigureKind::Histogram,
            x_label: "Logs per user".into(),
            y_label: "Share of users".into(),
            row_labels: vec!["users".into()],
            col_labels: freq.iter().map(|r| r.bin.clone()).collect(),
            values: vec![freq.iter().map(|r| r.users as f64 / total).collect()],
            highlight_rows: Vec::new(),
        });
    }

    let clock = sleep_clock(logs);
    let mut t = Table::new("sleep_clock", &["hour", "start_count", "start_share", "end_count", "end_share"]);
    for h in 0..24 {
        t.push(vec![
            format!("{h:02}"),
            clock.start_counts[h].to_string(),
            fmt_f64(clock.start_share[h]),
            clock.end_counts[h].to_string(),
            fmt_f64(clock.end_share[h]),
        ]);
    }
    c.tables.push(t);
    if clock.n_logs > 0 {
        c.figures.push(clock.figure());
    }

    let bins = duration_by_start_bin(logs, cfg.mwu_mode);
    let mut header = vec!["start_bin", "n", "mean_duration", "mean_deep_sleep"];
    header.extend(bins.duration_bin_labels.iter().map(String::as_str));
    let mut t = Table::new("duration_by_start_bin", &header);
    for b in &bins.bins {
        let mut row = vec![b.label.clone(), b.n.to_string(), fmt_opt(b.mean_duration), fmt_opt(b.mean_deep_sleep)];
        row.extend(b.duration_counts.iter().map(|v| v.to_string()));
        t.push(row);
    }
    c.tables.push(t);
    for test in &bins.tests {
        c.tests.push(test_row("duration_by_start_bin", test));
    }
    if clock.n_logs > 0 {
        c.figures.push(bins.figure());
    }

    let heat = wake_heatmap(logs);
    let mut t = Table::new("wake_heatmap", &["day", "weekend", "hour", "count", "proportion"]);
    for (d, day) in WEEKDAYS.iter().enumerate() {
        for h in 0..24 {
            t.push(vec![
                day.to_string(),
                heat.weekend[d].to_string(),
                format!("{h:02}"),
                heat.counts[d][h].to_string(),
                fmt_f64(heat.proportions[d][h]),
            ]);
        }
    }
    c.tables.push(t);
    if heat.row_totals.iter().any(|&n| n > 0) {
        c.figures.push(heat.figure());
    }

    let presleep = cohort_analyses(&mut c, &mut users, logs, inputs, cfg);
    c.tables.insert(0, users_table("users", &users));

    let robustness = cfg.robustness_min_logs.map(|min| {
        let keep: std::collections::BTreeSet<&str> =
            users.iter().filter(|u| u.n_logs >= min).map(|u| u.user_id.as_str()).collect();
        let sub_logs: Vec<SleepLog> = logs.iter().filter(|l| keep.contains(l.user_id.as_str())).cloned().collect();
        let mut sub_users: Vec<UserRecord> = users.iter().filter(|u| keep.contains(u.user_id.as_str())).cloned().collect();
        c.suffix = format!("_min{min}");
        let presleep = cohort_analyses(&mut c, &mut sub_users, &sub_logs, inputs, cfg);
        c.suffix.clear();
        json!({
            "min_logs": min,
            "users": sub_users.len(),
            "logs": sub_logs.len(),
            "presleep": presleep,
        })
    });

    let summary = json!({
        "population": {
            "users": users.len(),
            "logs": agg.n_logs,
            "resolved_users": users.iter().filter(|u| u.country.country.is_some()).count(),
        },
        "aggregates": {
            "overall_mean_duration": agg.overall_mean_duration,
            "mean_of_user_means_duration": agg.mean_of_user_means_duration,
            "overall_mean_deep_sleep": agg.overall_mean_deep_sleep,
            "mean_of_user_means_deep_sleep": agg.mean_of_user_means_deep_sleep,
        },
        "sleep_clock": {
            "n_logs": clock.n_logs,
            "start_share_22_03": clock.start_share_22_03,
            "end_share_05_10": clock.end_share_05_10,
            "end_share_06_07": clock.end_share_06_07,
        },
        "duration_by_start_bin": bins,
        "wake_heatmap": {
            "row_totals": heat.row_totals,
            "unanchored": heat.unanchored,
        },
        "presleep": presleep,
        "cohorts": c.cohorts,
        "skipped": c.skipped,
        "robustness": robustness,
    });
    let mut tables = c.tables;
    tables.push(c.tests);
    ReportBundle {
        tables,
        figures: c.figures,
        summary,
    }
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `<name>.csv` per table, `<id>.svg` per figure, `figures.json`
    /// and `summary.json` into `dir`. `effective_config` is embedded in the
    /// summary and in every SVG.
    pub fn write(&self, dir: &Path, effective_config: &BTreeMap<String, String>) -> Result<Vec<String>, ReportError> {
        let mut written = Vec::new();
        let mut put = |name: String, bytes: &[u8]| -> Result<(), ReportError> {
            write_file(&dir.join(&name), bytes)?;
            written.push(name);
            Ok(())
        };
        for t in &self.tables {
            put(format!("{}.csv", t.name), &t.to_csv()?)?;
        }
        let desc: String = effective_config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        for f in &self.figures {
            put(format!("{}.svg", f.id), render_svg(f, &desc)?.as_bytes())?;
        }
        let figs = serde_json::to_string_pretty(&self.figures).expect("figures serialize") + "\n";
        put("figures.json".into(), figs.as_bytes())?;
        let mut summary = self.summary.clone();
        summary["effective_config"] = serde_json::to_value(effective_config).unwrap();
        let s = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        put("summary.json".into(), s.as_bytes())?;
        Ok(written)
    }
}
