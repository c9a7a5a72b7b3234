//! Feed-forward ReLU network with a sigmoid output, trained by Adam on
//! mini-batches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 strength; the penalty `0.5 * alpha * |W|^2` is divided by the
    /// batch size, biases unpenalized.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop once the epoch loss fails to improve by `tol` for
    /// `n_iter_no_change` consecutive epochs.
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![10; 10],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tol: 1e-4,
            n_iter_no_change: 10,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0)
            || !(self.learning_rate > 0.0)
            || self.epochs == 0
            || self.batch_size == 0
            || !(self.alpha >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::InvalidInput(format!("bad MLP parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_in × n_out`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

impl Mlp {
    /// Glorot-uniform initialization of weights and biases.
    pub fn init(n_in: usize, hidden: &[usize], rng: &mut impl Rng) -> Mlp {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    n_in: w[0],
                    n_out: w[1],
                    weights: (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: (0..w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Mlp {
            layers,
            epochs_run: 0,
            final_loss: f64::NAN,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, theta: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[at..at + nb]);
            at += nb;
        }
    }

    /// Pre-activations and activations for one input row.
    fn forward(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let a = acts.last().unwrap();
            let mut z = l.bias.clone();
            for i in 0..l.n_in {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let row = &l.weights[i * l.n_out..(i + 1) * l.n_out];
                for (zo, w) in z.iter_mut().zip(row) {
                    *zo += ai * w;
                }
            }
            if li < last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn margin_row(&self, input: &[f64]) -> f64 {
        self.forward(input).last().unwrap()[0]
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                sigmoid(self.margin_row(&row))
            })
            .collect()
    }

    /// Mean log-loss over `rows` plus the scaled L2 term, with the gradient
    /// in [`flat`](Self::flat) order.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[u8], rows: &[usize], alpha: f64) -> (f64, Vec<f64>) {
        let m = rows.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for &r in rows {
            let input: Vec<f64> = x.row(r).iter().copied().collect();
            let acts = self.forward(&input);
            let z = acts[last + 1][0];
            let yi = f64::from(y[r]);
            // log(1 + e^z) - y z
            loss += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() } - yi * z;
            let mut delta = vec![sigmoid(z) - yi];
            for li in (0..=last).rev() {
                let l = &self.layers[li];
                let a = &acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..l.n_out {
                    gb[o] += delta[o];
                }
                for i in 0..l.n_in {
                    if a[i] == 0.0 {
                        continue;
                    }
                    for o in 0..l.n_out {
                        gw[i * l.n_out + o] += a[i] * delta[o];
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.n_in];
                    for (i, p) in prev.iter_mut().enumerate() {
                        // relu derivative from the stored activation
                        if a[i] > 0.0 {
                            let row = &l.weights[i * l.n_out..(i + 1) * l.n_out];
                            *p = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                        }
                    }
                    delta = prev;
                }
            }
        }
        let mut sq = 0.0;
        let mut flat = Vec::with_capacity(self.n_params());
        for (l, (gw, gb)) in self.layers.iter().zip(grads) {
            for (g, w) in gw.iter().zip(&l.weights) {
                sq += w * w;
                flat.push((g + alpha * w) / m);
            }
            flat.extend(gb.iter().map(|g| g / m));
        }
        ((loss + 0.5 * alpha * sq) / m, flat)
    }
}

pub fn fit(x: &Matrix, y: &[u8], params: &MlpParams, seed: u64) -> Result<Mlp> {
    params.validate()?;
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::init(x.ncols(), &params.hidden, &mut rng);
    let mut theta = net.flat();
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut epoch_loss = f64::NAN;

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for batch in order.chunks(params.batch_size) {
            net.set_flat(&theta);
            let (loss, g) = net.loss_and_grad(x, y, batch, params.alpha);
            acc += loss * batch.len() as f64;
            step += 1;
            let lr = params.learning_rate * (1.0 - params.beta2.powi(step)).sqrt()
                / (1.0 - params.beta1.powi(step));
            for k in 0..theta.len() {
                m1[k] = params.beta1 * m1[k] + (1.0 - params.beta1) * g[k];
                m2[k] = params.beta2 * m2[k] + (1.0 - params.beta2) * g[k] * g[k];
                theta[k] -= lr * m1[k] / (m2[k].sqrt() + params.epsilon);
            }
        }
        epoch_loss = acc / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonConvergence {
                model: "MLP",
                iterations: epoch + 1,
                grad_norm: f64::NAN,
            });
        }
        net.epochs_run = epoch + 1;
        if epoch_loss > best - params.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale > params.n_iter_no_change {
            break;
        }
    }
    net.set_flat(&theta);
    net.final_loss = epoch_loss;
    Ok(net)
}
