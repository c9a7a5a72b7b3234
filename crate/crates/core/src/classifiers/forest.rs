//! Random forest of Gini classification trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, normalize, Node, Tree};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` means `floor(sqrt(p))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            min_samples_split: 2,
            max_features: None,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_split < 2 || self.max_features == Some(0) {
            return Err(Error::InvalidInput(format!("bad forest parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Total weighted Gini decrease per feature, normalized to sum 1.
    pub importances: Vec<f64>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    params: &'a ForestParams,
    max_features: usize,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = self.nodes.len();
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        self.nodes.push(Node::Leaf {
            value: pos as f64 / n as f64,
        });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if n < self.params.min_samples_split || pos == 0 || pos == n || !depth_ok {
            return at;
        }

        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);
        // (weighted child impurity, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut sorted = idx.clone();
        for &f in &features {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let lo = self.x[(sorted[0], f)];
            let hi = self.x[(sorted[n - 1], f)];
            if lo == hi {
                continue;
            }
            visited += 1;
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += usize::from(self.y[sorted[k]] == 1);
                let (a, b) = (self.x[(sorted[k], f)], self.x[(sorted[k + 1], f)]);
                if a == b {
                    continue;
                }
                let nl = k + 1;
                let imp = nl as f64 * gini(left_pos, nl) + (n - nl) as f64 * gini(pos - left_pos, n - nl);
                if best.is_none_or(|(bi, _, _)| imp < bi) {
                    best = Some((imp, f, midpoint(a, b)));
                }
            }
        }
        let Some((imp, feature, threshold)) = best else {
            return at;
        };
        self.gains[feature] += n as f64 * gini(pos, n) - imp;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[(i, feature)] < threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

pub fn fit(x: &Matrix, y: &[u8], params: &ForestParams, seed_root: u64) -> Result<Forest> {
    params.validate()?;
    let (n, p) = x.shape();
    let max_features = params
        .max_features
        .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
        .min(p);
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_index(seed_root, t as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                y,
                params,
                max_features,
                nodes: Vec::new(),
                gains: vec![0.0; p],
            };
            b.grow(idx, 0, &mut rng);
            (Tree { nodes: b.nodes }, b.gains)
        })
        .collect();
    let mut importances = vec![0.0; p];
    for (_, g) in &grown {
        for (acc, v) in importances.iter_mut().zip(g) {
            *acc += v;
        }
    }
    normalize(&mut importances);
    Ok(Forest {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        importances,
    })
}

impl Forest {
    /// Mean of per-tree leaf class-1 fractions.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / k)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_fits_training_data() {
        let x = Matrix::from_fn(30, 2, |i, j| if j == 0 { ((i * 13) % 17) as f64 } else { ((i * 5) % 7) as f64 });
        let y: Vec<u8> = (0..30).map(|i| u8::from((i * 13) % 17 > 8)).collect();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(2),
            ..ForestParams::default()
        };
        let f = fit(&x, &y, &params, 1).unwrap();
        let p = f.predict_proba(&x);
        for (pi, yi) in p.iter().zip(&y) {
            assert_eq!(*pi, f64::from(*yi));
        }
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f.importances[1], 0.0);
    }

    #[test]
    fn same_seed_same_forest() {
        let x = Matrix::from_fn(50, 3, |i, j| ((i * 31 + j * 11) % 23) as f64);
        let y: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let a = fit(&x, &y, &ForestParams::default(), 9).unwrap();
        let b = fit(&x, &y, &ForestParams::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
