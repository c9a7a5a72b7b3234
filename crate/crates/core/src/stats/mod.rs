//! Statistics kit: OLS, nested F-test, ADF, Benjamini-Hochberg, McNemar and
//! classification metrics. Everything here is pure and reentrant.

mod adf;
mod metrics;
mod multiple;
mod ols;
pub mod special;

pub use adf::{adf_test, AdfLags, AdfResult};
pub use metrics::{precision_recall_f1, Prf};
pub use multiple::{bh_adjust, BhResult};
pub use ols::{f_test_nested, ols_fit, OlsFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Numerator / single degrees of freedom.
    pub df1: f64,
    /// Denominator degrees of freedom, 0 where not applicable.
    pub df2: f64,
    /// Set when the statistic was fixed by convention (e.g. no discordant
    /// pairs, perfect fit).
    pub degenerate: bool,
}

/// McNemar test on paired predictions against the same truth.
///
/// `b` counts samples the model gets right and the benchmark gets wrong, `c`
/// the reverse. With `b + c >= 25` the continuity-corrected chi-squared form
/// is used, otherwise the exact two-sided binomial test.
pub fn mcnemar(model: &[u8], benchmark: &[u8], truth: &[u8]) -> Result<TestResult> {
    if model.len() != truth.len() || benchmark.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "mcnemar needs aligned vectors, got {}, {}, {}",
            model.len(),
            benchmark.len(),
            truth.len()
        )));
    }
    let mut b = 0u64;
    let mut c = 0u64;
    for ((m, bm), t) in model.iter().zip(benchmark).zip(truth) {
        match (m == t, bm == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(b, c))
}

/// Continuity-corrected chi-squared McNemar test, regardless of sample size.
pub fn mcnemar_corrected(b: u64, c: u64) -> TestResult {
    let n = b + c;
    if n == 0 {
        return mcnemar_counts(0, 0);
    }
    let statistic = ((b as f64 - c as f64).abs() - 1.0).max(0.0).powi(2) / n as f64;
    TestResult {
        statistic,
        p_value: special::chi2_sf(statistic, 1.0).clamp(0.0, 1.0),
        df1: 1.0,
        df2: 0.0,
        degenerate: false,
    }
}

/// McNemar from discordant counts; exact binomial below 25 discordant pairs.
/// The reported statistic is always the continuity-corrected chi-squared.
pub fn mcnemar_counts(b: u64, c: u64) -> TestResult {
    let n = b + c;
    if n == 0 {
        return TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df1: 1.0,
            df2: 0.0,
            degenerate: true,
        };
    }
    let diff = (b as f64 - c as f64).abs();
    let statistic = (diff - 1.0).max(0.0).powi(2) / n as f64;
    let p_value = if n >= 25 {
        special::chi2_sf(statistic, 1.0)
    } else {
        special::binomial_two_sided_half(b.min(c), n)
    };
    TestResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        df1: 1.0,
        df2: 0.0,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcnemar_corrected_reference_value() {
        let r = mcnemar_corrected(15, 5);
        assert!((r.statistic - 4.05).abs() < 1e-12);
        assert!((r.p_value - 0.044_171_345).abs() < 1e-8, "p={}", r.p_value);
        // 20 discordant pairs fall under the exact rule: 2 * P(X <= 5 | 20, 1/2)
        let exact = mcnemar_counts(15, 5);
        assert_eq!(exact.statistic, r.statistic);
        assert!((exact.p_value - 2.0 * 21_700.0 / 1_048_576.0).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_exact_small() {
        let r = mcnemar_counts(3, 0);
        assert!((r.p_value - 0.25).abs() < 1e-15);
        assert!(!r.degenerate);
    }

    #[test]
    fn mcnemar_equal_counts_is_null() {
        let r = mcnemar_counts(40, 40);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mcnemar_no_discordance_is_degenerate() {
        let y = [0u8, 1, 1, 0];
        let r = mcnemar(&y, &y, &[1, 1, 0, 0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn mcnemar_swaps_symmetrically() {
        let truth = [1u8, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let m = [1u8, 0, 0, 1, 1, 0, 1, 1, 1, 0];
        let bm = [0u8, 0, 1, 1, 0, 1, 0, 0, 1, 1];
        let ab = mcnemar(&m, &bm, &truth).unwrap();
        let ba = mcnemar(&bm, &m, &truth).unwrap();
        assert_eq!(ab.statistic, ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn mcnemar_rejects_misaligned() {
        assert!(mcnemar(&[1], &[1, 0], &[1, 0]).is_err());
    }
}
