//! Time-of-day analyses: start/end histograms, duration by start bin and the
//! weekday wake-up heatmap. Times are the user's local civil times.

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use super::{duration_edges, edge_labels, start_bin, NamedTest, TestOutcome, START_BIN_LABELS};
use crate::grammar::SleepLog;
use crate::report::{FigureKind, FigureMatrix};
use crate::stats::{hour_histogram, histogram, mean, MwuMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepClock {
    pub n_logs: usize,
    pub start_counts: [f64; 24],
    pub end_counts: [f64; 24],
    pub start_share: [f64; 24],
    pub end_share: [f64; 24],
    /// Share of starts in `[22:00, 03:00)`.
    pub start_share_22_03: Option<f64>,
    /// Share of ends in `[05:00, 10:00)`.
    pub end_share_05_10: Option<f64>,
    /// Share of ends in `[06:00, 07:00)`.
    pub end_share_06_07: Option<f64>,
}

pub fn sleep_clock(logs: &[SleepLog]) -> SleepClock {
    let start_counts = hour_histogram(logs.iter().map(|l| l.start_civil), false);
    let end_counts = hour_histogram(logs.iter().map(|l| l.end_civil), false);
    let n = logs.len();
    let share = |counts: &[f64; 24], hours: &[usize]| {
        (n > 0).then(|| hours.iter().map(|&h| counts[h]).sum::<f64>() / n as f64)
    };
    SleepClock {
        n_logs: n,
        start_share: hour_histogram(logs.iter().map(|l| l.start_civil), true),
        end_share: hour_histogram(logs.iter().map(|l| l.end_civil), true),
        start_share_22_03: share(&start_counts, &[22, 23, 0, 1, 2]),
        end_share_05_10: share(&end_counts, &[5, 6, 7, 8, 9]),
        end_share_06_07: share(&end_counts, &[6]),
        start_counts,
        end_counts,
    }
}

impl SleepClock {
    pub fn figure(&self) -> FigureMatrix {
        FigureMatrix {
            id: "sleep_clock".into(),
            title: "Sleep start and end times".into(),
            kind: FigureKind::Histogram,
            x_label: "Hour of day (local)".into(),
            y_label: "Share of logs".into(),
            row_labels: vec!["start".into(), "end".into()],
            col_labels: (0..24).map(|h| format!("{h:02}")).collect(),
            values: vec![self.start_share.to_vec(), self.end_share.to_vec()],
            highlight_rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartBinRow {
    pub label: String,
    pub n: usize,
    pub mean_duration: Option<f64>,
    pub mean_deep_sleep: Option<f64>,
    /// Counts over [`duration_edges`](super::duration_edges).
    pub duration_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartBinReport {
    pub duration_bin_labels: Vec<String>,
    pub bins: Vec<StartBinRow>,
    /// Evening `[18,21)` against post-midnight `[00,03)`.
    pub tests: Vec<NamedTest>,
}

const EVENING: usize = 6;
const POST_MIDNIGHT: usize = 0;

pub fn duration_by_start_bin(logs: &[SleepLog], mode: MwuMode) -> StartBinReport {
    let edges = duration_edges();
    let mut per_bin: Vec<Vec<&SleepLog>> = vec![Vec::new(); START_BIN_LABELS.len()];
    for l in logs {
        per_bin[start_bin(l)].push(l);
    }
    let durations = |b: usize| per_bin[b].iter().map(|l| l.duration_minutes as f64).collect::<Vec<_>>();
    let deeps = |b: usize| per_bin[b].iter().filter_map(|l| l.deep_sleep_pct.map(f64::from)).collect::<Vec<_>>();
    let bins = (0..START_BIN_LABELS.len())
        .map(|b| {
            let d = durations(b);
            StartBinRow {
                label: START_BIN_LABELS[b].to_owned(),
                n: d.len(),
                mean_duration: mean(&d),
                mean_deep_sleep: mean(&deeps(b)),
                duration_counts: histogram(&d, &edges),
            }
        })
        .collect();
    let test = |name: &str, a: Vec<f64>, b: Vec<f64>| {
        let outcome = if a.is_empty() || b.is_empty() {
            TestOutcome::NotComputable {
                reason: format!("empty bin ({} vs {} logs)", a.len(), b.len()),
            }
        } else {
            TestOutcome::from_samples(&a, &b, mode)
        };
        NamedTest {
            name: name.into(),
            outcome,
        }
    };
    StartBinReport {
        duration_bin_labels: edge_labels(&edges),
        bins,
        tests: vec![
            test("duration_18_21_vs_00_03", durations(EVENING), durations(POST_MIDNIGHT)),
            test("deep_sleep_18_21_vs_00_03", deeps(EVENING), deeps(POST_MIDNIGHT)),
        ],
    }
}

impl StartBinReport {
    pub fn figure(&self) -> FigureMatrix {
        FigureMatrix {
            id: "duration_by_start_bin".into(),
            title: "Sleep duration by sleep start time".into(),
            kind: FigureKind::Heatmap,
            x_label: "Duration (minutes)".into(),
            y_label: "Sleep start (local hour)".into(),
            row_labels: self.bins.iter().map(|b| b.label.clone()).collect(),
            col_labels: self.duration_bin_labels.clone(),
            values: self.bins.iter().map(|b| crate::stats::normalize(&b.duration_counts)).collect(),
            highlight_rows: Vec::new(),
        }
    }
}

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeHeatmap {
    /// `counts[day][hour]`, Monday first.
    pub counts: Vec<Vec<u64>>,
    /// Each row divided by its total (zero rows stay zero).
    pub proportions: Vec<Vec<f64>>,
    pub row_totals: Vec<u64>,
    pub weekend: [bool; 7],
    /// Logs without a calendar anchor, which cannot be placed on a weekday.
    pub unanchored: usize,
}

pub fn wake_heatmap(logs: &[SleepLog]) -> WakeHeatmap {
    let mut counts = vec![vec![0u64; 24]; 7];
    let mut unanchored = 0;
    for l in logs {
        match &l.anchor {
            Some(a) => {
                let day = a.end_local.weekday().num_days_from_monday() as usize;
                counts[day][a.end_local.hour() as usize] += 1;
            }
            None => unanchored += 1,
        }
    }
    let row_totals: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let proportions = counts
        .iter()
        .map(|r| crate::stats::normalize(&r.iter().map(|&c| c as f64).collect::<Vec<_>>()))
        .collect();
    WakeHeatmap {
        counts,
        proportions,
        row_totals,
        weekend: [false, false, false, false, false, true, true],
        unanchored,
    }
}

impl WakeHeatmap {
    /// Hour with the most wake-ups on `day`, earliest on ties.
    pub fn modal_hour(&self, day: usize) -> Option<usize> {
        let row = &self.counts[day];
        let max = *row.iter().max()?;
        (max > 0).then(|| row.iter().position(|&c| c == max).unwrap())
    }

    pub fn figure(&self) -> FigureMatrix {
        FigureMatrix {
            id: "wake_heatmap".into(),
            title: "Wake-up times by day of week".into(),
            kind: FigureKind::Heatmap,
            x_label: "Hour of day (local)".into(),
            y_label: "Day of week".into(),
            row_labels: WEEKDAYS.iter().map(|d| d.to_string()).collect(),
            col_labels: (0..24).map(|h| format!("{h:02}")).collect(),
            values: self.proportions.clone(),
            highlight_rows: (0..7).filter(|&d| self.weekend[d]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::log;
    use crate::grammar::Anchor;
    use chrono::{NaiveDate, NaiveTime, TimeZone, Utc};

    fn at(h: u32, m: u32) -> NaiveTime {
        NaiveTime::from_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn all_starts_at_23_are_in_window() {
        let logs: Vec<_> = (0..5).map(|i| log(&i.to_string(), 400, None)).collect();
        let c = sleep_clock(&logs);
        assert_eq!(c.start_share_22_03, Some(1.0));
        assert_eq!(c.end_share_06_07, Some(1.0));
        assert!((c.start_share.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(sleep_clock(&[]).start_share_22_03, None);
    }

    #[test]
    fn single_bin_reports_others_empty_and_skips_tests() {
        let logs: Vec<_> = (0..5).map(|i| log("u", 400 + i, Some(50))).collect();
        let r = duration_by_start_bin(&logs, MwuMode::Auto);
        assert_eq!(r.bins[7].n, 5);
        assert!(r.bins.iter().take(7).all(|b| b.n == 0 && b.mean_duration.is_none()));
        assert!(r.tests.iter().all(|t| t.outcome.result().is_none()));
    }

    #[test]
    fn one_tuesday_wake() {
        let mut l = log("u", 400, None);
        let end = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap().and_time(at(6, 30));
        assert_eq!(end.weekday(), chrono::Weekday::Tue);
        l.anchor = Some(Anchor {
            utc_offset_seconds: 0,
            start_local: end - chrono::Duration::minutes(400),
            end_local: end,
            start_utc: Utc.from_utc_datetime(&(end - chrono::Duration::minutes(400))),
            end_utc: Utc.from_utc_datetime(&end),
        });
        let h = wake_heatmap(&[l, log("v", 400, None)]);
        assert_eq!(h.counts[1][6], 1);
        assert_eq!(h.counts.iter().flatten().sum::<u64>(), 1);
        assert_eq!(h.unanchored, 1);
        assert_eq!(h.row_totals[1], 1);
        assert_eq!(h.modal_hour(1), Some(6));
        assert_eq!(h.modal_hour(0), None);
        assert_eq!(h.figure().highlight_rows, [5, 6]);
    }
}
