//! Pearson correlation with a Student-t p-value.

use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_two_sided: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    check_finite(x)?;
    check_finite(y)?;
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_two_sided = if r.abs() == 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided_p(t, df)
    };
    Ok(CorrelationResult { r, p_two_sided, n })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)`, by continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // the fraction converges fast only below the mean; mirror otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_lines() {
        let r = pearson(&[1., 2., 3.], &[2., 4., 6.]).unwrap();
        assert_eq!((r.r, r.p_two_sided), (1.0, 0.0));
        let r = pearson(&[1., 2., 3.], &[6., 4., 2.]).unwrap();
        assert_eq!((r.r, r.p_two_sided), (-1.0, 0.0));
    }

    #[test]
    fn hand_case_point_eight() {
        // centered x = [-1.5,-.5,.5,1.5], y = [-1.5,.5,-.5,1.5]: cov sum 4, var sums 5 and 5
        let r = pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert!((r.r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_short() {
        assert_eq!(pearson(&[1., 1., 1.], &[1., 2., 3.]).unwrap_err(), StatsError::DegenerateSample);
        assert!(matches!(pearson(&[1., 2.], &[1., 2.]), Err(StatsError::TooFew { .. })));
        assert!(matches!(pearson(&[1., 2., 3.], &[1., 2.]), Err(StatsError::LengthMismatch(3, 2))));
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1,1) = x ; I_x(a,1) = x^a ; I_x(1,b) = 1-(1-x)^b
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((reg_inc_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((reg_inc_beta(3.0, 1.0, x) - x.powi(3)).abs() < 1e-14);
            assert!((reg_inc_beta(1.0, 4.0, x) - (1.0 - (1.0 - x).powi(4))).abs() < 1e-14);
        }
    }

    #[test]
    fn t_with_one_df_is_cauchy() {
        // P(|T|>=t) = 1 - 2 atan(t)/pi for df = 1
        for &t in &[0.1, 1.0, 3.0, 12.0] {
            let expect = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_two_sided_p(t, 1.0) - expect).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn affine_invariance(
            pts in prop::collection::vec((-100f64..100., -100f64..100.), 3..40),
            a in 0.1f64..10., b in -50f64..50.,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let Ok(base) = pearson(&x, &y) else { return Ok(()); };
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let scaled = pearson(&xs, &y).unwrap();
            prop_assert!((scaled.r - base.r).abs() < 1e-12);
            let neg: Vec<f64> = y.iter().map(|v| -a * v + b).collect();
            let flipped = pearson(&x, &neg).unwrap();
            prop_assert!((flipped.r + base.r).abs() < 1e-12);
            prop_assert!(base.r.abs() <= 1.0);
        }
    }
}
