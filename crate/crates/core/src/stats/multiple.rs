use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    /// Adjusted p-values in input order.
    pub adjusted: Vec<f64>,
    /// Rejection flags in input order (`adjusted <= alpha`).
    pub rejected: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment.
pub fn bh_adjust(p_values: &[f64], alpha: f64) -> BhResult {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort with index tie-break keeps the result permutation-invariant.
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = p_values[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate).min(1.0);
        adjusted[i] = running;
    }
    let rejected = adjusted.iter().map(|&a| a <= alpha).collect();
    BhResult { adjusted, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_small_p_values_all_rejected() {
        let r = bh_adjust(&[0.01, 0.02, 0.04, 0.05], 0.05);
        assert_eq!(r.rejected, vec![true; 4]);
        let want = [0.04, 0.04, 0.05, 0.05];
        for (a, w) in r.adjusted.iter().zip(want) {
            assert!((a - w).abs() < 1e-15, "{a} vs {w}");
        }
    }

    #[test]
    fn all_ones_none_rejected() {
        let r = bh_adjust(&[1.0; 6], 0.05);
        assert!(r.rejected.iter().all(|r| !r));
        assert!(r.adjusted.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn single_test_is_unadjusted() {
        let r = bh_adjust(&[0.03], 0.05);
        assert_eq!(r.adjusted, vec![0.03]);
        assert!(r.rejected[0]);
    }

    #[test]
    fn empty_input() {
        let r = bh_adjust(&[], 0.05);
        assert!(r.adjusted.is_empty());
    }
}
