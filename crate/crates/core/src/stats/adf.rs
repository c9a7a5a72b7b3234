use serde::{Deserialize, Serialize};

use super::{ols_fit, special, TestResult};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const ADF_MIN_OBS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdfLags {
    /// Minimise AIC over `0..=floor(12 * (n / 100)^(1/4))`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub test: TestResult,
    pub used_lag: usize,
    pub n_obs: usize,
    /// 1%, 5% and 10% critical values for the effective sample size.
    pub critical_values: [f64; 3],
}

impl AdfResult {
    pub fn rejects_unit_root(&self, alpha: f64) -> bool {
        self.test.p_value < alpha
    }
}

/// Augmented Dickey-Fuller test with a constant and no trend.
///
/// Regression: `dx_t = a + g * x_{t-1} + sum_i phi_i * dx_{t-i} + e_t`; the
/// statistic is the t-ratio of `g` and the null is a unit root.
pub fn adf_test(series: &[f64], lags: AdfLags) -> Result<AdfResult> {
    let n = series.len();
    if n < ADF_MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "ADF needs at least {ADF_MIN_OBS} observations, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ADF input contains non-finite values".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::InvalidInput("ADF input is constant".into()));
    }

    let used_lag = match lags {
        AdfLags::Fixed(l) => {
            if n < l + 2 + 10 {
                return Err(Error::InsufficientData(format!(
                    "lag {l} leaves too few observations for n={n}"
                )));
            }
            l
        }
        AdfLags::Auto => {
            let max_lag = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
            let max_lag = max_lag.min(n / 2 - 3);
            select_lag_by_aic(series, max_lag)?
        }
    };

    let (x, y) = design(series, used_lag, used_lag);
    let fit = ols_fit(&x, &y)?;
    let stat = fit.t_stat(1);
    let n_obs = y.len();
    Ok(AdfResult {
        test: TestResult {
            statistic: stat,
            p_value: mackinnon_p(stat),
            df1: (used_lag + 2) as f64,
            df2: fit.dof as f64,
            degenerate: false,
        },
        used_lag,
        n_obs,
        critical_values: critical_values(n_obs),
    })
}

/// Regression rows start after `skip` differences so that lag searches share
/// one sample.
fn design(series: &[f64], lag: usize, skip: usize) -> (Matrix, Vec<f64>) {
    let n = series.len();
    let start = skip + 1;
    let rows = n - start;
    let dx = |t: usize| series[t] - series[t - 1];
    let x = Matrix::from_fn(rows, lag + 2, |i, j| {
        let t = start + i;
        match j {
            0 => 1.0,
            1 => series[t - 1],
            k => dx(t - (k - 1)),
        }
    });
    let y = (start..n).map(dx).collect();
    (x, y)
}

fn select_lag_by_aic(series: &[f64], max_lag: usize) -> Result<usize> {
    let mut best = (f64::INFINITY, 0usize);
    for lag in 0..=max_lag {
        let (x, y) = design(series, lag, max_lag);
        // exactly periodic inputs make long lag sets collinear; skip those
        let fit = match ols_fit(&x, &y) {
            Ok(f) => f,
            Err(crate::Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !(fit.rss > 0.0) {
            continue;
        }
        let nobs = y.len() as f64;
        let k = (lag + 2) as f64;
        let llf = -0.5 * nobs * ((2.0 * std::f64::consts::PI).ln() + (fit.rss / nobs).ln() + 1.0);
        let aic = -2.0 * llf + 2.0 * k;
        if aic < best.0 {
            best = (aic, lag);
        }
    }
    Ok(best.1)
}

/// MacKinnon (1994) response-surface p-value, constant-only case, one series.
fn mackinnon_p(stat: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let coef: &[f64] = if stat <= TAU_STAR { &SMALL } else { &LARGE };
    let z = coef.iter().rev().fold(0.0, |acc, c| acc * stat + c);
    special::normal_cdf(z)
}

/// MacKinnon (2010) finite-sample critical values, constant-only case.
fn critical_values(n_obs: usize) -> [f64; 3] {
    const COEF: [[f64; 4]; 3] = [
        [-3.43035, -6.5393, -16.786, -79.433],
        [-2.86154, -2.8903, -4.234, -40.040],
        [-2.56677, -1.5384, -2.809, 0.0],
    ];
    let t = n_obs as f64;
    COEF.map(|c| c[0] + c[1] / t + c[2] / (t * t) + c[3] / (t * t * t))
}
