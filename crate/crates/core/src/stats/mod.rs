//! Statistical kernels used by the analyses.

mod mwu;
mod pearson;

use std::collections::BTreeMap;

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mwu::{mann_whitney_u, midranks, MwuMethod, MwuMode, TestResult};
pub use pearson::{pearson, reg_inc_beta, student_t_two_sided_p, CorrelationResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample `{0}` is empty")]
    EmptySample(&'static str),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("degenerate sample: zero variance")]
    DegenerateSample,
    #[error("exact distribution too large to enumerate ({n1} vs {n2})")]
    ExactTooLarge { n1: usize, n2: usize },
    #[error("count must be at least 1")]
    InvalidCount,
}

pub(crate) fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Sample variance (n − 1 denominator).
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Standard normal upper tail, `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [Quartile::Q1, Quartile::Q2, Quartile::Q3, Quartile::Q4];

    pub fn label(self) -> &'static str {
        match self {
            Quartile::Q1 => "Q1",
            Quartile::Q2 => "Q2",
            Quartile::Q3 => "Q3",
            Quartile::Q4 => "Q4",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuartileSplit<K> {
    /// Nearest-rank values at ranks ⌈n/4⌉, ⌈n/2⌉, ⌈3n/4⌉.
    pub thresholds: [f64; 3],
    pub assignment: BTreeMap<K, Quartile>,
}

impl<K: Ord> QuartileSplit<K> {
    pub fn members(&self, q: Quartile) -> impl Iterator<Item = &K> {
        self.assignment.iter().filter(move |(_, v)| **v == q).map(|(k, _)| k)
    }
}

/// Nearest-rank value at 1-based rank ⌈p·n⌉ of sorted data.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Splits keys into quartiles of their metric. Values equal to a threshold
/// go to the lower quartile, so all-equal metrics land in Q1.
pub fn quartile_split<K: Ord + Clone>(metric: &BTreeMap<K, f64>) -> Result<QuartileSplit<K>, StatsError> {
    if metric.len() < 4 {
        return Err(StatsError::TooFew {
            need: 4,
            got: metric.len(),
        });
    }
    let mut values: Vec<f64> = metric.values().copied().collect();
    check_finite(&values)?;
    values.sort_by(f64::total_cmp);
    let thresholds = [
        nearest_rank(&values, 0.25),
        nearest_rank(&values, 0.5),
        nearest_rank(&values, 0.75),
    ];
    let assignment = metric
        .iter()
        .map(|(k, &v)| {
            let q = if v <= thresholds[0] {
                Quartile::Q1
            } else if v <= thresholds[1] {
                Quartile::Q2
            } else if v <= thresholds[2] {
                Quartile::Q3
            } else {
                Quartile::Q4
            };
            (k.clone(), q)
        })
        .collect();
    Ok(QuartileSplit { thresholds, assignment })
}

/// Counts per local hour of day; with `normalize`, proportions summing to 1
/// (all zeros for empty input).
pub fn hour_histogram<T: Timelike>(times: impl IntoIterator<Item = T>, normalize: bool) -> [f64; 24] {
    let mut bins = [0f64; 24];
    let mut n = 0usize;
    for t in times {
        bins[t.hour() as usize] += 1.0;
        n += 1;
    }
    if normalize && n > 0 {
        for b in &mut bins {
            *b /= n as f64;
        }
    }
    bins
}

/// Counts of `values` in `[edges[i], edges[i+1])`; the last bin is closed on
/// the right. Values outside the edges are dropped.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut bins = vec![0f64; edges.len().saturating_sub(1)];
    let Some(last) = edges.last() else {
        return bins;
    };
    for &v in values {
        if v == *last && !bins.is_empty() {
            *bins.last_mut().unwrap() += 1.0;
            continue;
        }
        if let Some(i) = edges.windows(2).position(|w| v >= w[0] && v < w[1]) {
            bins[i] += 1.0;
        }
    }
    bins
}

/// Scales non-negative counts to proportions; all-zero input stays zero.
pub fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        vec![0.0; counts.len()]
    } else {
        counts.iter().map(|c| c / total).collect()
    }
}

pub const LOG2_BIN_LABELS: [&str; 9] = ["1", "2-3", "4-7", "8-15", "16-31", "32-63", "64-127", "128-255", "256+"];

/// Logarithmic bin index for a count: bin k holds 2^k ..= 2^(k+1) − 1, with
/// everything from 256 up in the last bin.
pub fn log2_bin(count: u64) -> Result<usize, StatsError> {
    if count == 0 {
        return Err(StatsError::InvalidCount);
    }
    Ok((63 - count.leading_zeros() as usize).min(LOG2_BIN_LABELS.len() - 1))
}

pub fn log2_bin_label(count: u64) -> Result<&'static str, StatsError> {
    log2_bin(count).map(|k| LOG2_BIN_LABELS[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveTime;
    use proptest::prelude::*;

    fn metric(vals: &[f64]) -> BTreeMap<usize, f64> {
        vals.iter().copied().enumerate().collect()
    }

    #[test]
    fn quartiles_of_one_to_eight() {
        let m = metric(&[1., 2., 3., 4., 5., 6., 7., 8.]);
        let s = quartile_split(&m).unwrap();
        let q = |k: Quartile| s.members(k).map(|i| m[i]).collect::<Vec<_>>();
        assert_eq!(q(Quartile::Q1), [1., 2.]);
        assert_eq!(q(Quartile::Q2), [3., 4.]);
        assert_eq!(q(Quartile::Q3), [5., 6.]);
        assert_eq!(q(Quartile::Q4), [7., 8.]);
    }

    #[test]
    fn quartiles_of_one_to_four() {
        let s = quartile_split(&metric(&[1., 2., 3., 4.])).unwrap();
        for q in Quartile::ALL {
            assert_eq!(s.members(q).count(), 1);
        }
    }

    #[test]
    fn equal_metrics_all_go_to_q1() {
        let s = quartile_split(&metric(&[3.; 9])).unwrap();
        assert_eq!(s.members(Quartile::Q1).count(), 9);
    }

    #[test]
    fn quartiles_need_four() {
        assert_eq!(
            quartile_split(&metric(&[1., 2., 3.])).unwrap_err(),
            StatsError::TooFew { need: 4, got: 3 }
        );
    }

    #[test]
    fn hour_histogram_cases() {
        let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).unwrap();
        let h = hour_histogram([t(22, 15), t(22, 45), t(23, 10)], true);
        assert!((h[22] - 2.0 / 3.0).abs() < 1e-12);
        assert!((h[23] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(hour_histogram(Vec::<NaiveTime>::new(), true), [0.0; 24]);
        let uniform = hour_histogram((0..24).map(|h| t(h, 30)), true);
        assert!(uniform.iter().all(|p| (p - 1.0 / 24.0).abs() < 1e-12));
    }

    #[test]
    fn log2_bins() {
        assert_eq!(log2_bin_label(1).unwrap(), "1");
        assert_eq!(log2_bin_label(3).unwrap(), "2-3");
        assert_eq!(log2_bin_label(100).unwrap(), "64-127");
        assert_eq!(log2_bin_label(255).unwrap(), "128-255");
        assert_eq!(log2_bin_label(256).unwrap(), "256+");
        assert_eq!(log2_bin_label(633).unwrap(), "256+");
        assert_eq!(log2_bin(0), Err(StatsError::InvalidCount));
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[0., 1., 1.5, 2., 3., 9.], &[0., 1., 2., 3.]);
        assert_eq!(h, [1., 2., 2.]);
    }

    proptest! {
        #[test]
        fn quartiles_partition_everyone(vals in prop::collection::vec(-1e6f64..1e6, 4..200)) {
            let m = metric(&vals);
            let s = quartile_split(&m).unwrap();
            prop_assert_eq!(s.assignment.len(), vals.len());
            let total: usize = Quartile::ALL.iter().map(|q| s.members(*q).count()).sum();
            prop_assert_eq!(total, vals.len());
            // monotone: a larger metric never lands in a lower quartile
            for (a, qa) in &s.assignment {
                for (b, qb) in &s.assignment {
                    if m[a] < m[b] { prop_assert!(qa <= qb); }
                }
            }
        }

        #[test]
        fn normalized_hours_sum_to_one(hours in prop::collection::vec(0u32..24, 1..500)) {
            let h = hour_histogram(hours.iter().map(|&h| NaiveTime::from_hms_opt(h, 0, 0).unwrap()), true);
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
