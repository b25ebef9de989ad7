//! Mann-Whitney U (Wilcoxon rank-sum) test.

use serde::{Deserialize, Serialize};

use super::{check_finite, mean, normal_sf, sample_variance, StatsError};

/// Largest pooled sample for which the auto mode enumerates exactly (tie-free only).
const AUTO_EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwuMode {
    #[default]
    Auto,
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// U of the first sample.
    pub u_statistic: f64,
    pub p_two_sided: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: MwuMethod,
    /// mean(a) − mean(b).
    pub mean_diff: f64,
    /// `mean_diff` over the pooled standard deviation.
    pub cohens_d: f64,
    /// The pooled standard deviation was zero (or undefined), so `cohens_d` is 0.
    pub effect_degenerate: bool,
}

/// Midranks (1-based, ties averaged) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
        if acc > u128::MAX >> 8 {
            return None;
        }
    }
    Some(acc)
}

/// Exact two-sided p by counting, over every way of choosing which `n1` of the
/// pooled observations belong to the first sample, how many give a rank sum
/// at or beyond the observed one. Works on doubled midranks so ties stay integral.
fn exact_p(ranks: &[f64], n1: usize, observed_r1: f64) -> Result<f64, StatsError> {
    let n = ranks.len();
    let too_large = StatsError::ExactTooLarge { n1, n2: n - n1 };
    let total = binomial(n, n1).ok_or(too_large.clone())?;
    // partial counts can reach the central binomial coefficient
    binomial(n, n1.min(n / 2)).ok_or(too_large)?;
    let weights: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = weights.iter().sum();
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0u128; max_sum + 1]; n1 + 1];
    counts[0][0] = 1;
    for (i, &w) in weights.iter().enumerate() {
        for k in (1..=n1.min(i + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (w..=max_sum).rev() {
                cur[s] += prev[s - w];
            }
        }
    }
    let obs = (observed_r1 * 2.0).round() as usize;
    let dist = &counts[n1];
    let le: u128 = dist[..=obs].iter().sum();
    let ge: u128 = dist[obs..].iter().sum();
    let tail = le.min(ge) as f64 / total as f64;
    Ok((2.0 * tail).min(1.0))
}

/// Rank-sum test of `a` against `b`. `Auto` enumerates exactly when there are
/// no ties and `n1·n2 ≤ 400`, else uses the tie-corrected normal
/// approximation with a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwuMode) -> Result<TestResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let groups = tie_groups(&pooled);
    let has_ties = groups.iter().any(|&t| t > 1);

    let method = match mode {
        MwuMode::Exact => MwuMethod::Exact,
        MwuMode::Approx => MwuMethod::NormalApprox,
        MwuMode::Auto if !has_ties && n1 * n2 <= AUTO_EXACT_MAX_PRODUCT => MwuMethod::Exact,
        MwuMode::Auto => MwuMethod::NormalApprox,
    };
    let p = match method {
        MwuMethod::Exact => exact_p(&ranks, n1, r1)?,
        MwuMethod::NormalApprox => {
            let n = (n1 + n2) as f64;
            let (f1, f2) = (n1 as f64, n2 as f64);
            let tie_term: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0)).max(1.0);
            let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term);
            if var <= 0.0 {
                1.0
            } else {
                let z = ((u - f1 * f2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
                (2.0 * normal_sf(z)).min(1.0)
            }
        }
    };

    let mean_diff = mean(a).unwrap() - mean(b).unwrap();
    let pooled_var = if n1 + n2 > 2 {
        let va = sample_variance(a).unwrap_or(0.0);
        let vb = sample_variance(b).unwrap_or(0.0);
        ((n1 - 1) as f64 * va + (n2 - 1) as f64 * vb) / (n1 + n2 - 2) as f64
    } else {
        0.0
    };
    let effect_degenerate = pooled_var <= 0.0;
    let cohens_d = if effect_degenerate { 0.0 } else { mean_diff / pooled_var.sqrt() };

    Ok(TestResult {
        u_statistic: u,
        p_two_sided: p,
        n1,
        n2,
        method,
        mean_diff,
        cohens_d,
        effect_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_exact() {
        // 6 equally likely label arrangements; U=0 occurs once: p = 2/6
        let r = mann_whitney_u(&[1., 2.], &[3., 4.], MwuMode::Auto).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, MwuMethod::Exact);
        assert!((r.p_two_sided - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let r = mann_whitney_u(&[5., 5., 5.], &[5., 5., 5.], MwuMode::Auto).unwrap();
        assert_eq!(r.u_statistic, 4.5);
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.method, MwuMethod::NormalApprox);
        assert!(r.effect_degenerate);
        assert_eq!(r.cohens_d, 0.0);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1., 2., 2., 4.]), [1., 2.5, 2.5, 4.]);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert_eq!(mann_whitney_u(&[], &[1.], MwuMode::Auto).unwrap_err(), StatsError::EmptySample("a"));
        assert!(mann_whitney_u(&[f64::NAN], &[1.], MwuMode::Auto).is_err());
    }

    #[test]
    fn exact_mode_handles_ties() {
        // brute force over C(5,2)=10 labelings of ranks [1, 2.5, 2.5, 4, 5]
        let r = mann_whitney_u(&[1., 2.], &[2., 3., 4.], MwuMode::Exact).unwrap();
        assert_eq!(r.method, MwuMethod::Exact);
        // observed R1 = 3.5; sums <= 3.5: {1,2.5}x2 -> 2 of 10; p = 0.4
        assert!((r.p_two_sided - 0.4).abs() < 1e-15);
    }

    #[test]
    fn cohens_d_uses_pooled_sd() {
        let r = mann_whitney_u(&[1., 2., 3.], &[4., 5., 6.], MwuMode::Auto).unwrap();
        assert!((r.mean_diff + 3.0).abs() < 1e-15);
        assert!((r.cohens_d + 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn u_is_antisymmetric(a in prop::collection::vec(0i32..20, 1..15), b in prop::collection::vec(0i32..20, 1..15)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b, MwuMode::Auto).unwrap();
            let ba = mann_whitney_u(&b, &a, MwuMode::Auto).unwrap();
            prop_assert_eq!(ab.u_statistic + ba.u_statistic, (a.len() * b.len()) as f64);
            prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
            prop_assert!(ab.u_statistic >= 0.0 && ab.u_statistic <= (a.len() * b.len()) as f64);
            prop_assert!((0.0..=1.0).contains(&ab.p_two_sided));
        }

        #[test]
        fn shift_invariant(a in prop::collection::vec(0i32..50, 1..12), b in prop::collection::vec(0i32..50, 1..12), c in -1000i32..1000) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let sa: Vec<f64> = a.iter().map(|x| x + c as f64).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + c as f64).collect();
            let r = mann_whitney_u(&a, &b, MwuMode::Auto).unwrap();
            let s = mann_whitney_u(&sa, &sb, MwuMode::Auto).unwrap();
            prop_assert_eq!(r.u_statistic, s.u_statistic);
            prop_assert_eq!(r.p_two_sided, s.p_two_sided);
        }
    }
}
