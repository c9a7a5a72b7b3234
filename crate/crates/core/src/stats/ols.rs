use serde::{Deserialize, Serialize};

use super::{special, TestResult};
use crate::error::{Error, Result};
use crate::linalg::{qr_solve, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub dof: usize,
    pub std_errors: Vec<f64>,
}

impl OlsFit {
    pub fn t_stat(&self, j: usize) -> f64 {
        self.coefficients[j] / self.std_errors[j]
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }
}

/// Ordinary least squares through a Householder QR of `x`.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "OLS needs more observations than regressors (n={n}, p={p})"
        )));
    }
    let yv = Vector::from_column_slice(y);
    let (beta, r_inv) = qr_solve(x, &yv)?;
    let fitted = x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let dof = n - p;
    let sigma2 = rss / dof as f64;
    let std_errors = (0..p)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        residuals,
        rss,
        dof,
        std_errors,
    })
}

/// F-test of a restricted model nested in `full` with `q` restrictions.
pub fn f_test_nested(restricted: &OlsFit, full: &OlsFit, q: usize) -> Result<TestResult> {
    if q == 0 {
        return Err(Error::InvalidInput("F-test needs at least one restriction".into()));
    }
    if restricted.n_obs() != full.n_obs() {
        return Err(Error::InvalidInput(
            "restricted and full fits use different samples".into(),
        ));
    }
    let df1 = q as f64;
    let df2 = full.dof as f64;
    let scale = restricted.rss.abs().max(f64::MIN_POSITIVE);
    if full.rss <= 1e-14 * scale {
        return Ok(TestResult {
            statistic: f64::INFINITY,
            p_value: 0.0,
            df1,
            df2,
            degenerate: true,
        });
    }
    let numerator = ((restricted.rss - full.rss) / df1).max(0.0);
    let statistic = numerator / (full.rss / df2);
    Ok(TestResult {
        statistic,
        p_value: special::f_sf(statistic, df1, df2).clamp(0.0, 1.0),
        df1,
        df2,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_line_through_origin() {
        let x = Matrix::from_column_slice(4, 1, &[1., 2., 3., 4.]);
        let fit = ols_fit(&x, &[2., 4., 6., 8.]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
        assert_eq!(fit.dof, 3);
    }

    #[test]
    fn one_hot_design_gives_group_means() {
        let groups = [0usize, 0, 1, 1, 1, 2, 2];
        let y = [1.0, 3.0, 2.0, 4.0, 6.0, 10.0, 12.0];
        let x = Matrix::from_fn(7, 3, |i, j| f64::from(u8::from(groups[i] == j)));
        let fit = ols_fit(&x, &y).unwrap();
        let want = [2.0, 4.0, 11.0];
        for (b, w) in fit.coefficients.iter().zip(want) {
            assert!((b - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, p) = (60, 5);
        let x = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = ols_fit(&x, &y).unwrap();
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * Vector::from_column_slice(&y);
        let oracle = xtx.cholesky().unwrap().solve(&xty);
        for j in 0..p {
            assert!((fit.coefficients[j] - oracle[j]).abs() < 1e-8);
        }
        // orthogonality of residuals to the design
        let r = Vector::from_column_slice(&fit.residuals);
        let g = x.transpose() * r;
        assert!(g.amax() < 1e-8 * x.norm() * Vector::from_column_slice(&y).norm());
    }

    #[test]
    fn rank_deficient_names_columns() {
        let x = Matrix::from_fn(10, 3, |i, j| if j == 2 { 2.0 * i as f64 } else if j == 1 { i as f64 } else { 1.0 });
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        match ols_fit(&x, &y) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_rss_gives_null_f() {
        let x = Matrix::from_fn(20, 1, |_, _| 1.0);
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let fit = ols_fit(&x, &y).unwrap();
        let r = f_test_nested(&fit, &fit, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    fn simulate(seed: u64, beta_extra: f64) -> (OlsFit, OlsFit) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * x1[i] + beta_extra * x2[i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let xr = Matrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x1[i] });
        let xf = Matrix::from_fn(n, 3, |i, j| [1.0, x1[i], x2[i]][j]);
        (ols_fit(&xr, &y).unwrap(), ols_fit(&xf, &y).unwrap())
    }

    #[test]
    fn noise_column_is_not_significant() {
        let (r, f) = simulate(2024, 0.0);
        let t = f_test_nested(&r, &f, 1).unwrap();
        assert!(t.p_value > 0.05, "p={}", t.p_value);
        assert!((t.statistic - f.t_stat(2).powi(2)).abs() < 1e-8 * t.statistic.max(1.0));
    }

    #[test]
    fn true_regressor_is_significant() {
        let (r, f) = simulate(2024, 0.8);
        let t = f_test_nested(&r, &f, 1).unwrap();
        assert!(t.p_value < 1e-6, "p={}", t.p_value);
    }
}
