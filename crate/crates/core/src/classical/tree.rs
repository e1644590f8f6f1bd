//! CART classification trees with deviance or twoing splits.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::N_STYLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Largest decrease in cross-entropy impurity.
    MaxDevianceReduction,
    /// Breiman's twoing rule.
    Twoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: SplitCriterion,
    /// Nodes with fewer rows than this become leaves.
    pub min_parent_size: usize,
    pub min_leaf_size: usize,
}

impl TreeParams {
    pub fn single(criterion: SplitCriterion) -> Self {
        TreeParams {
            criterion,
            min_parent_size: 10,
            min_leaf_size: 1,
        }
    }

    pub fn bagged() -> Self {
        TreeParams {
            criterion: SplitCriterion::MaxDevianceReduction,
            min_parent_size: 2,
            min_leaf_size: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        probs: [f64; N_STYLES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

type Counts = [usize; N_STYLES];

fn entropy(counts: &Counts, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Split score; larger is better. Deviance scores are impurity decreases, so
/// a non-positive score means the split is useless.
fn split_score(criterion: SplitCriterion, parent: &Counts, left: &Counts, n_left: usize, n: usize) -> f64 {
    let n_right = n - n_left;
    let mut right = [0usize; N_STYLES];
    for k in 0..N_STYLES {
        right[k] = parent[k] - left[k];
    }
    match criterion {
        SplitCriterion::MaxDevianceReduction => {
            let nf = n as f64;
            entropy(parent, n)
                - (n_left as f64 / nf) * entropy(left, n_left)
                - (n_right as f64 / nf) * entropy(&right, n_right)
        }
        SplitCriterion::Twoing => {
            let pl = n_left as f64 / n as f64;
            let pr = 1.0 - pl;
            let s: f64 = (0..N_STYLES)
                .map(|k| (left[k] as f64 / n_left as f64 - right[k] as f64 / n_right as f64).abs())
                .sum();
            pl * pr / 4.0 * s * s
        }
    }
}

impl DecisionTree {
    /// Grows a tree on the given rows of `x`; rows may repeat (bootstrap samples).
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], rows: &[usize], params: &TreeParams) -> Self {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_features: x.ncols(),
        };
        tree.grow(x, y, rows.to_vec(), params);
        tree
    }

    fn grow(&mut self, x: ArrayView2<'_, f64>, y: &[usize], rows: Vec<usize>, params: &TreeParams) -> usize {
        let n = rows.len();
        let mut counts = [0usize; N_STYLES];
        for &r in &rows {
            counts[y[r]] += 1;
        }
        let node_id = self.nodes.len();
        self.nodes.push(leaf(&counts, n));

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < params.min_parent_size || n < 2 * params.min_leaf_size {
            return node_id;
        }

        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for feature in 0..x.ncols() {
            order.clear();
            order.extend(rows.iter().map(|&r| (x[[r, feature]], y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = [0usize; N_STYLES];
            for i in 0..n - 1 {
                left[order[i].1] += 1;
                let n_left = i + 1;
                if order[i].0 == order[i + 1].0
                    || n_left < params.min_leaf_size
                    || n - n_left < params.min_leaf_size
                {
                    continue;
                }
                let score = split_score(params.criterion, &counts, &left, n_left, n);
                if score > 1e-12 && best.is_none_or(|(s, _, _)| score > s) {
                    let threshold = 0.5 * (order[i].0 + order[i + 1].0);
                    best = Some((score, feature, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return node_id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x[[r, feature]] < threshold);
        let left = self.grow(x, y, left_rows, params);
        let right = self.grow(x, y, right_rows, params);
        self.nodes[node_id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_id
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Class frequencies of the leaf `x` falls into.
    pub fn predict_proba_row(&self, x: ArrayView1<'_, f64>) -> [f64; N_STYLES] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { probs } => return *probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

fn leaf(counts: &Counts, n: usize) -> Node {
    let mut probs = [0.0; N_STYLES];
    for k in 0..N_STYLES {
        probs[k] = counts[k] as f64 / n as f64;
    }
    Node::Leaf { probs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twoing_prefers_balanced_pure_split() {
        let parent = [2, 2, 0, 0, 0, 0, 0, 0];
        let perfect = split_score(SplitCriterion::Twoing, &parent, &[2, 0, 0, 0, 0, 0, 0, 0], 2, 4);
        let partial = split_score(SplitCriterion::Twoing, &parent, &[1, 0, 0, 0, 0, 0, 0, 0], 1, 4);
        // pL = pR = 1/2, sum |diff| = 2 → 1/16 · 4
        assert!((perfect - 0.25).abs() < 1e-12);
        assert!(partial < perfect);
    }

    #[test]
    fn deviance_gain_of_perfect_split_is_parent_entropy() {
        let parent = [3, 3, 0, 0, 0, 0, 0, 0];
        let gain = split_score(
            SplitCriterion::MaxDevianceReduction,
            &parent,
            &[3, 0, 0, 0, 0, 0, 0, 0],
            3,
            6,
        );
        assert!((gain - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fits_xor_like_layout() {
        let x = ndarray::array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let params = TreeParams {
            min_parent_size: 2,
            ..TreeParams::single(SplitCriterion::MaxDevianceReduction)
        };
        let tree = DecisionTree::fit(x.view(), &y, &[0, 1, 2, 3], &params);
        // XOR has no first split with positive gain, so the tree stays a single leaf.
        assert_eq!(tree.n_nodes(), 1);
        let p = tree.predict_proba_row(x.row(0));
        assert_eq!(p[0], 0.5);
    }
}
