//! Soft-margin SVM with an RBF kernel, solved by SMO with second-order
//! working-set selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::logistic::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    /// RBF bandwidth; `None` uses `1 / (p * Var(X))`.
    pub gamma: Option<f64>,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            gamma: None,
            max_iter: 10_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        let gamma_ok = self.gamma.is_none_or(|g| g > 0.0);
        if !(self.c > 0.0) || !(self.tol > 0.0) || !gamma_ok || self.max_iter == 0 {
            return Err(Error::InvalidInput(format!("bad SVM parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub bias: f64,
    /// Support vectors as rows.
    pub support: Matrix,
    /// `alpha_i * y_i` with `y_i` in {-1, +1}.
    pub dual_coef: Vec<f64>,
    pub iterations: usize,
}

fn rbf(gamma: f64, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let d2: f64 = a.zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

pub fn scale_gamma(x: &Matrix) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.ncols() as f64 * var)
    } else {
        1.0
    }
}

pub fn fit(x: &Matrix, y: &[u8], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let n = x.nrows();
    let gamma = params.gamma.unwrap_or_else(|| scale_gamma(x));
    let yy: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(gamma, x.row(i).iter().copied(), x.row(j).iter().copied());
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| yy[i] * yy[j] * k[i * n + j];
    let c = params.c;
    let mut alpha = vec![0.0; n];
    // gradient of 0.5 a'Qa - e'a
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    const TAU: f64 = 1e-12;

    let mut iterations = 0;
    loop {
        let mut i_sel = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], yy[t]) && -yy[t] * grad[t] >= g_max {
                g_max = -yy[t] * grad[t];
                i_sel = t;
            }
        }
        let mut j_sel = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            for t in 0..n {
                if !in_low(alpha[t], yy[t]) {
                    continue;
                }
                let v = -yy[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let a = (q(i_sel, i_sel) + q(t, t) - 2.0 * yy[i_sel] * yy[t] * q(i_sel, t)).max(TAU);
                    let o = -(b * b) / a;
                    if o <= obj_min {
                        obj_min = o;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || g_max - g_min < params.tol {
            break;
        }
        if iterations == params.max_iter {
            return Err(Error::NonConvergence {
                model: "SV",
                iterations,
                grad_norm: g_max - g_min,
            });
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (q(i, i) + q(j, j) - 2.0 * yy[i] * yy[j] * q(i, j)).max(TAU);
        if yy[i] != yy[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            } else if diff <= 0.0 && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            } else if sum <= c && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            } else if sum <= c && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = yy[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_n += 1;
        } else if (alpha[t] == 0.0 && yy[t] > 0.0) || (alpha[t] == c && yy[t] < 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let support = Matrix::from_fn(sv.len(), x.ncols(), |r, col| x[(sv[r], col)]);
    Ok(SvmModel {
        gamma,
        bias: -rho,
        support,
        dual_coef: sv.iter().map(|&t| alpha[t] * yy[t]).collect(),
        iterations,
    })
}

impl SvmModel {
    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.bias
                    + self
                        .dual_coef
                        .iter()
                        .enumerate()
                        .map(|(s, a)| {
                            a * rbf(
                                self.gamma,
                                x.row(i).iter().copied(),
                                self.support.row(s).iter().copied(),
                            )
                        })
                        .sum::<f64>()
            })
            .collect()
    }

    /// Logistic link on the decision value.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}
