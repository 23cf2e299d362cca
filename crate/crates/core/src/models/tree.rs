//! Greedy CART regression tree (variance-reduction splits).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    /// Total squared-error reduction credited to each feature.
    pub impurity_decrease: Vec<f64>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

impl RegressionTree {
    /// Fit on the rows listed in `sample` (repeats allowed, as in a
    /// bootstrap draw).
    pub fn fit(x: &[Vec<f64>], y: &[f64], sample: &[usize], params: &TreeParams) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let min_leaf = params.min_samples_leaf.max(1);
        let mut tree = RegressionTree {
            nodes: Vec::new(),
            n_features,
            impurity_decrease: vec![0.0; n_features],
        };
        // (node slot, row indices, depth)
        let mut stack = vec![(0usize, sample.to_vec(), 0usize)];
        tree.nodes.push(Node::Leaf { value: 0.0 });
        while let Some((slot, rows, depth)) = stack.pop() {
            let value = mean(rows.iter().map(|&i| y[i]));
            let can_split = rows.len() >= 2 * min_leaf && params.max_depth.is_none_or(|d| depth < d);
            let best = if can_split { best_split(x, y, &rows, n_features, min_leaf) } else { None };
            match best {
                None => tree.nodes[slot] = Node::Leaf { value },
                Some(b) => {
                    tree.impurity_decrease[b.feature] += b.gain;
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
                    debug_assert_eq!(left.len(), b.n_left);
                    let l = tree.nodes.len();
                    tree.nodes.push(Node::Leaf { value: 0.0 });
                    tree.nodes.push(Node::Leaf { value: 0.0 });
                    tree.nodes[slot] = Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((l + 1, right, depth + 1));
                    stack.push((l, left, depth + 1));
                }
            }
        }
        tree
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn best_split(x: &[Vec<f64>], y: &[f64], rows: &[usize], n_features: usize, min_leaf: usize) -> Option<Best> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / n as f64;
    if parent_sse <= 0.0 {
        return None;
    }
    let min_gain = parent_sse * 1e-12;

    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for j in 0..n_features {
        order.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]).then(a.cmp(&b)));
        let (mut s, mut sq) = (0.0, 0.0);
        for p in 1..n {
            let yi = y[order[p - 1]];
            s += yi;
            sq += yi * yi;
            if p < min_leaf || n - p < min_leaf {
                continue;
            }
            let (lo, hi) = (x[order[p - 1]][j], x[order[p]][j]);
            if lo == hi {
                continue;
            }
            let sse_l = sq - s * s / p as f64;
            let (rs, rsq) = (total - s, total_sq - sq);
            let sse_r = rsq - rs * rs / (n - p) as f64;
            let gain = parent_sse - sse_l - sse_r;
            if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some(Best {
                    feature: j,
                    threshold: if mid < hi { mid } else { lo },
                    gain,
                    n_left: p,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_single_leaf() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y = vec![7.0; 20];
        let t = RegressionTree::fit(&x, &y, &(0..20).collect::<Vec<_>>(), &TreeParams::default());
        assert_eq!(t.nodes, vec![Node::Leaf { value: 7.0 }]);
    }

    #[test]
    fn step_function_single_split() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.0 { 1.0 } else { 0.0 }).collect();
        let t = RegressionTree::fit(&x, &y, &(0..10).collect::<Vec<_>>(), &TreeParams::default());
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict_row(&[-100.0]), 0.0);
        assert_eq!(t.predict_row(&[100.0]), 1.0);
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.0);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i * i) as f64).collect();
        let all: Vec<usize> = (0..64).collect();
        let t = RegressionTree::fit(&x, &y, &all, &TreeParams { max_depth: Some(3), min_samples_leaf: 1 });
        assert!(t.depth() <= 3);
        let t = RegressionTree::fit(&x, &y, &all, &TreeParams { max_depth: None, min_samples_leaf: 5 });
        // every leaf holds at least 5 training rows
        let mut counts = std::collections::HashMap::new();
        for r in &x {
            *counts.entry(t.predict_row(r).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5));
    }

    #[test]
    fn gain_credited_to_split_feature() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 10.0 }).collect();
        let t = RegressionTree::fit(&x, &y, &(0..40).collect::<Vec<_>>(), &TreeParams::default());
        assert_eq!(t.impurity_decrease[0], 0.0);
        assert!(t.impurity_decrease[1] > 0.0);
    }
}
