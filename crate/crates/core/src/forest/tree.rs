use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RfHyperparams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        count: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction in sum of squared errors.
    pub gain: f64,
    pub left_count: usize,
}

/// Row-major feature table with targets.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
}

impl<'a> Rows<'a> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::shape(format!(
                "{} feature rows, {} targets",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::data("no rows"));
        }
        let width = x[0].len();
        if width == 0 || x.iter().any(|r| r.len() != width) {
            return Err(Error::shape("feature rows must share a positive width"));
        }
        Ok(Rows { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x[0].len()
    }
}

/// Number of candidate features per node.
pub fn features_per_node(fraction: f64, width: usize) -> usize {
    ((fraction * width as f64).ceil() as usize).clamp(1, width)
}

/// Best SSE-reducing split of `idx` over `features`, thresholds at midpoints
/// between consecutive distinct values. Ties keep the earliest candidate in
/// (feature order, threshold ascending). Returns `None` if no split with
/// positive gain respects `min_leaf`.
pub fn find_best_split(
    rows: Rows<'_>,
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = idx.iter().map(|&i| rows.y[i]).sum();
    let parent = total * total / n as f64;
    let eps = 1e-12 * parent.abs().max(1.0);
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (rows.x[i][f], rows.y[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = 0.0;
        for k in 1..n {
            left += pairs[k - 1].1;
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (a, b) = (pairs[k - 1].0, pairs[k].0);
            if a >= b {
                continue;
            }
            let right = total - left;
            let gain = left * left / k as f64 + right * right / (n - k) as f64 - parent;
            // Candidates inducing the same partition can differ by rounding
            // only; a challenger must win by more than that to displace the
            // earlier one.
            if gain > eps && best.is_none_or(|s| gain > s.gain + eps) {
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                    left_count: k,
                });
            }
        }
    }
    best
}

fn sample_features<R: Rng + ?Sized>(width: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..width).collect();
    for i in 0..m {
        let j = rng.random_range(i..width);
        all.swap(i, j);
    }
    let mut chosen = all[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `idx` (repeats allowed).
    pub fn fit<R: Rng + ?Sized>(
        rows: Rows<'_>,
        idx: Vec<usize>,
        hp: &RfHyperparams,
        rng: &mut R,
    ) -> Result<RegressionTree> {
        if idx.is_empty() {
            return Err(Error::data("cannot grow a tree on zero rows"));
        }
        let m = features_per_node(hp.max_features, rows.width());
        let mut tree = RegressionTree { nodes: Vec::new() };
        // (node slot, rows, depth)
        let mut stack = vec![(0usize, idx, 0usize)];
        tree.nodes.push(Node::Leaf {
            value: 0.0,
            count: 0,
        });
        while let Some((slot, idx, depth)) = stack.pop() {
            let n = idx.len();
            let mean = idx.iter().map(|&i| rows.y[i]).sum::<f64>() / n as f64;
            let can_split = depth < hp.max_depth && n >= hp.min_samples_split.max(2);
            let split = if can_split {
                let features = sample_features(rows.width(), m, rng);
                find_best_split(rows, &idx, &features, hp.min_samples_leaf)
            } else {
                None
            };
            match split {
                None => {
                    tree.nodes[slot] = Node::Leaf {
                        value: mean,
                        count: n,
                    }
                }
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = idx
                        .iter()
                        .partition(|&&i| rows.x[i][s.feature] <= s.threshold);
                    let left = tree.nodes.len();
                    tree.nodes.push(Node::Leaf {
                        value: 0.0,
                        count: 0,
                    });
                    tree.nodes.push(Node::Leaf {
                        value: 0.0,
                        count: 0,
                    });
                    tree.nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right: left + 1,
                        count: n,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Ok(tree)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, count } => Some((*value, *count)),
            Node::Split { .. } => None,
        })
    }
}
