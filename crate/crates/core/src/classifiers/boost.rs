//! Gradient-boosted trees on logistic loss with exact greedy splits.

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::tree::{midpoint, normalize, Node, Tree};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain required to split.
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 100,
            learning_rate: 0.3,
            max_depth: 10,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0
            || !(self.learning_rate > 0.0)
            || self.max_depth == 0
            || !(self.lambda >= 0.0)
            || !(self.gamma >= 0.0)
            || !(self.min_child_weight >= 0.0)
        {
            return Err(Error::InvalidInput(format!("bad boosting parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    /// Margin added before the trees (log-odds of 0.5, i.e. zero).
    pub base_margin: f64,
    pub trees: Vec<Tree>,
    /// Total split gain per feature, normalized to sum 1.
    pub importances: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

pub fn fit(x: &Matrix, y: &[u8], params: &BoostParams) -> Result<Booster> {
    params.validate()?;
    let (n, p) = x.shape();
    let order: Vec<Vec<usize>> = (0..p)
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
            o
        })
        .collect();
    let mut margin = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut gains = vec![0.0; p];
    let lambda = params.lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);

    for _ in 0..params.n_rounds {
        let grad: Vec<f64> = (0..n).map(|i| sigmoid(margin[i]) - f64::from(y[i])).collect();
        let hess: Vec<f64> = (0..n)
            .map(|i| {
                let q = sigmoid(margin[i]);
                (q * (1.0 - q)).max(1e-16)
            })
            .collect();

        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut sums = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
        let mut node_of = vec![0usize; n];
        // nodes still eligible for splitting at this level
        let mut frontier = vec![0usize];

        for _depth in 0..params.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot = vec![usize::MAX; nodes.len()];
            for (s, &nd) in frontier.iter().enumerate() {
                slot[nd] = s;
            }
            let mut best: Vec<Option<Best>> = vec![None; frontier.len()];
            for f in 0..p {
                let mut gl = vec![0.0; frontier.len()];
                let mut hl = vec![0.0; frontier.len()];
                let mut last: Vec<Option<f64>> = vec![None; frontier.len()];
                for &i in &order[f] {
                    let s = slot[node_of[i]];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = x[(i, f)];
                    if let Some(prev) = last[s] {
                        if v > prev {
                            let (g, h) = sums[frontier[s]];
                            let (gr, hr) = (g - gl[s], h - hl[s]);
                            if hl[s] >= params.min_child_weight && hr >= params.min_child_weight {
                                let gain = 0.5 * (score(gl[s], hl[s]) + score(gr, hr) - score(g, h))
                                    - params.gamma;
                                if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                    best[s] = Some(Best {
                                        gain,
                                        feature: f,
                                        threshold: midpoint(prev, v),
                                    });
                                }
                            }
                        }
                    }
                    gl[s] += grad[i];
                    hl[s] += hess[i];
                    last[s] = Some(v);
                }
            }

            let mut next = Vec::new();
            let mut children = vec![(usize::MAX, usize::MAX); frontier.len()];
            for (s, &nd) in frontier.iter().enumerate() {
                if let Some(b) = best[s] {
                    gains[b.feature] += b.gain;
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    sums.push((0.0, 0.0));
                    sums.push((0.0, 0.0));
                    nodes[nd] = Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left,
                        right: left + 1,
                    };
                    children[s] = (left, left + 1);
                    next.push(left);
                    next.push(left + 1);
                }
            }
            for i in 0..n {
                let s = slot[node_of[i]];
                if s == usize::MAX || children[s].0 == usize::MAX {
                    continue;
                }
                let Node::Split {
                    feature, threshold, ..
                } = nodes[node_of[i]]
                else {
                    unreachable!()
                };
                let child = if x[(i, feature)] < threshold {
                    children[s].0
                } else {
                    children[s].1
                };
                node_of[i] = child;
                sums[child].0 += grad[i];
                sums[child].1 += hess[i];
            }
            frontier = next;
        }

        for (nd, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                let (g, h) = sums[nd];
                *value = -g / (h + lambda) * params.learning_rate;
            }
        }
        let tree = Tree { nodes };
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(x, i);
        }
        if margin.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("boosting margin became non-finite".into()));
        }
        trees.push(tree);
    }
    normalize(&mut gains);
    Ok(Booster {
        base_margin: 0.0,
        trees,
        importances: gains,
    })
}

impl Booster {
    pub fn margin(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.base_margin + self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.margin(x).into_iter().map(sigmoid).collect()
    }
}
