//! L2-penalized logistic regression fitted by L-BFGS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats::special::normal_cdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    /// Penalty `0.5 * l2 * |w|^2` added to the summed log-loss. The
    /// intercept is not penalized.
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1.0,
            tol: 1e-6,
            max_iter: 1000,
            memory: 10,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !(self.tol > 0.0) || self.max_iter == 0 || self.memory == 0 {
            return Err(Error::InvalidInput(format!("bad logistic parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Wald p-values from the inverse penalized Hessian, intercept excluded.
    pub p_values: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood and its gradient. `theta[0]` is the
/// intercept.
pub fn objective(x: &Matrix, y: &[u8], l2: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let mut f = 0.0;
    let mut g = vec![0.0; p + 1];
    for i in 0..n {
        let mut z = theta[0];
        for j in 0..p {
            z += x[(i, j)] * theta[j + 1];
        }
        let yi = f64::from(y[i]);
        f += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        g[0] += r;
        for j in 0..p {
            g[j + 1] += r * x[(i, j)];
        }
    }
    for j in 1..=p {
        f += 0.5 * l2 * theta[j] * theta[j];
        g[j] += l2 * theta[j];
    }
    (f, g)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fit(x: &Matrix, y: &[u8], params: &LogisticParams) -> Result<LogisticModel> {
    params.validate()?;
    let p = x.ncols();
    let mut theta = vec![0.0; p + 1];
    let (mut f, mut g) = objective(x, y, params.l2, &theta);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;

    while inf_norm(&g) >= params.tol {
        if iterations == params.max_iter {
            return Err(Error::NonConvergence {
                model: "LG",
                iterations,
                grad_norm: inf_norm(&g),
            });
        }
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for k in (0..m).rev() {
            let rho = 1.0 / dotv(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dotv(&s_hist[k], &q);
            for (qi, yi) in q.iter_mut().zip(&y_hist[k]) {
                *qi -= alpha[k] * yi;
            }
        }
        let gamma = if m > 0 {
            dotv(&s_hist[m - 1], &y_hist[m - 1]) / dotv(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            1.0 / inf_norm(&g).max(1.0)
        };
        for qi in &mut q {
            *qi *= gamma;
        }
        for k in 0..m {
            let rho = 1.0 / dotv(&y_hist[k], &s_hist[k]);
            let beta = rho * dotv(&y_hist[k], &q);
            for (qi, si) in q.iter_mut().zip(&s_hist[k]) {
                *qi += (alpha[k] - beta) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dotv(&g, &dir);
        if !(slope < 0.0) {
            // lost descent; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dotv(&g, &dir);
        }

        // backtracking Armijo search
        let mut step = 1.0;
        let (new_theta, new_f, new_g) = loop {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (cf, cg) = objective(x, y, params.l2, &cand);
            if cf <= f + 1e-4 * step * slope {
                break (cand, cf, cg);
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::NonConvergence {
                    model: "LG",
                    iterations,
                    grad_norm: inf_norm(&g),
                });
            }
        };
        let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dotv(&s, &yv) > 1e-12 * dotv(&yv, &yv).max(f64::MIN_POSITIVE) {
            if s_hist.len() == params.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        let converged_flat = (f - new_f).abs() <= f64::EPSILON * f.abs() && inf_norm(&new_g) < params.tol * 1e3;
        theta = new_theta;
        f = new_f;
        g = new_g;
        if converged_flat {
            break;
        }
    }

    let p_values = wald_p_values(x, &theta, params.l2);
    Ok(LogisticModel {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        p_values,
        iterations,
        grad_norm: inf_norm(&g),
    })
}

fn wald_p_values(x: &Matrix, theta: &[f64], l2: f64) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut h = Matrix::zeros(p + 1, p + 1);
    for i in 0..n {
        let mut z = theta[0];
        for j in 0..p {
            z += x[(i, j)] * theta[j + 1];
        }
        let pi = sigmoid(z);
        let w = pi * (1.0 - pi);
        for a in 0..=p {
            let xa = if a == 0 { 1.0 } else { x[(i, a - 1)] };
            for b in 0..=a {
                let xb = if b == 0 { 1.0 } else { x[(i, b - 1)] };
                h[(a, b)] += w * xa * xb;
            }
        }
    }
    for a in 0..=p {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    for j in 1..=p {
        h[(j, j)] += l2;
    }
    match h.try_inverse() {
        Some(inv) => (1..=p)
            .map(|j| {
                let se = inv[(j, j)].max(0.0).sqrt();
                if se == 0.0 {
                    return f64::NAN;
                }
                let z = (theta[j] / se).abs();
                (2.0 * (1.0 - normal_cdf(z))).clamp(0.0, 1.0)
            })
            .collect(),
        None => vec![f64::NAN; p],
    }
}

impl LogisticModel {
    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| u8::from(x[(i, 0)] + rng.random_range(-1.0..1.0) > 0.0)).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (x, y) = random_problem(seed, 30, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = objective(&x, &y, 1.0, &theta);
            for j in 0..5 {
                let h = 1e-5;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                let fd = (objective(&x, &y, 1.0, &tp).0 - objective(&x, &y, 1.0, &tm).0) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * fd.abs().max(1.0), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn optimum_is_stationary() {
        let (x, y) = random_problem(7, 200, 3);
        let m = fit(&x, &y, &LogisticParams::default()).unwrap();
        let mut theta = vec![m.intercept];
        theta.extend(&m.coefficients);
        let (_, g) = objective(&x, &y, 1.0, &theta);
        assert!(inf_norm(&g) < 1e-6);
        assert!(m.coefficients[0] > 1.0);
        assert!(m.p_values[0] < 1e-6);
    }

    #[test]
    fn label_flip_symmetry() {
        let (x, y) = random_problem(3, 150, 3);
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let a = fit(&x, &y, &LogisticParams::default()).unwrap().predict_proba(&x);
        let b = fit(&x, &flipped, &LogisticParams::default()).unwrap().predict_proba(&x);
        for (pa, pb) in a.iter().zip(&b) {
            assert!((pa + pb - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fitted_mean_matches_base_rate() {
        // the unpenalized intercept forces sum(p) = sum(y) at the optimum
        let x = Matrix::from_column_slice(8, 1, &[1., -1., 1., -1., 1., -1., 1., -1.]);
        let y = [1, 1, 0, 0, 1, 1, 0, 1];
        let m = fit(&x, &y, &LogisticParams::default()).unwrap();
        let p = m.predict_proba(&x);
        let ybar = 5.0 / 8.0;
        let mean_p = p.iter().sum::<f64>() / 8.0;
        assert!((mean_p - ybar).abs() < 1e-6);
    }
}
