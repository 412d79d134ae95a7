//! Medians and two-sample t-tests used for reporting.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Median of the finite values; even counts average the middle two.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestMethod {
    /// Student's t with pooled variance, `df = n_a + n_b - 2`.
    #[default]
    Pooled,
    /// Unequal variances with Welch–Satterthwaite degrees of freedom.
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sample t-test of `a` against `b`.
pub fn t_test(a: &[f64], b: &[f64], method: TTestMethod) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("t-test needs at least two samples per group"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("t-test samples must be finite"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::DegenerateSamples);
    }
    let (se, df) = match method {
        TTestMethod::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
        TTestMethod::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df)
        }
    };
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_rules() {
        assert_eq!(median(&[0.1, 0.5, 1.0]), Some(0.5));
        assert_eq!(median(&[7.0]), Some(7.0));
        assert_eq!(median(&[1.0, 3.0]), Some(2.0));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[f64::NAN, 2.0]), Some(2.0));
    }

    #[test]
    fn identical_groups() {
        let r = t_test(&[1.0, 4.0, 2.0], &[1.0, 4.0, 2.0], TTestMethod::Pooled).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_example() {
        // means 2 and 3, both variances 1: t = -1 / sqrt(2/3)
        let r = t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], TTestMethod::Pooled).unwrap();
        assert!((r.t + 1.224744871391589).abs() < 1e-12);
        assert_eq!(r.df, 4.0);
        // scipy.stats.ttest_ind([1,2,3],[2,3,4]).pvalue
        assert!((r.p - 0.2878641347266908).abs() < 1e-9);
    }

    #[test]
    fn groups_of_879_have_df_1756() {
        let a: Vec<f64> = (0..879).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..879).map(|i| (i as f64 * 0.11).cos()).collect();
        assert_eq!(t_test(&a, &b, TTestMethod::Pooled).unwrap().df, 1756.0);
    }

    #[test]
    fn welch_df() {
        let r = t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 6.0], TTestMethod::Welch).unwrap();
        // va = 5/3, vb = 8; qa = 5/12, qb = 4
        let (qa, qb) = (5.0 / 12.0, 4.0);
        let df = (qa + qb) * (qa + qb) / (qa * qa / 3.0 + qb * qb);
        assert!((r.df - df).abs() < 1e-12);
        assert!((r.t - (2.5 - 4.0) / (qa + qb).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_short() {
        assert!(matches!(
            t_test(&[1.0, 1.0], &[2.0, 2.0], TTestMethod::Pooled),
            Err(Error::DegenerateSamples)
        ));
        assert!(t_test(&[1.0], &[2.0, 3.0], TTestMethod::Pooled).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric(a in proptest::collection::vec(-50.0f64..50.0, 2..30),
                         b in proptest::collection::vec(-50.0f64..50.0, 2..30)) {
            if let (Ok(x), Ok(y)) = (t_test(&a, &b, TTestMethod::Pooled), t_test(&b, &a, TTestMethod::Pooled)) {
                prop_assert_eq!(x.t, -y.t);
                prop_assert_eq!(x.p, y.p);
            }
        }

        #[test]
        fn median_permutation_invariant(mut v in proptest::collection::vec(-100.0f64..100.0, 1..40), seed in any::<u64>()) {
            let m = median(&v);
            let mut s = seed;
            for i in (1..v.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(median(&v), m);
        }
    }
}
