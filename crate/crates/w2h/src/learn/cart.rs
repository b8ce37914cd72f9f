//! Classification tree (CART) with Gini impurity and exact midpoint
//! thresholds, grown deterministically: the best split is searched in
//! feature order, ties keep the first candidate, and leaves take the
//! smallest majority label.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// recorded in metadata; training itself is deterministic
    pub seed: u64,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { max_depth: 64, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CartNode {
    Leaf { label: usize },
    /// goes left when `x[feature] < threshold`
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCart {
    pub nodes: Vec<CartNode>,
    pub depth: usize,
    pub leaf_count: usize,
    pub params: CartParams,
    pub n_features: usize,
}

impl TrainedCart {
    /// Fits a tree on rows of `features` with class labels `labels`.
    /// Panics on empty input; callers validate.
    pub fn fit(features: &[Vec<f64>], labels: &[usize], params: CartParams) -> TrainedCart {
        assert!(!features.is_empty(), "empty training set");
        assert_eq!(features.len(), labels.len());
        let n_features = features[0].len();
        let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;

        let mut tree = TrainedCart {
            nodes: Vec::new(),
            depth: 0,
            leaf_count: 0,
            params,
            n_features,
        };
        let idx: Vec<usize> = (0..features.len()).collect();
        tree.grow(features, labels, n_classes, idx, 0);
        tree
    }

    fn grow(
        &mut self,
        xs: &[Vec<f64>],
        ys: &[usize],
        n_classes: usize,
        rows: Vec<usize>,
        depth: usize,
    ) -> usize {
        self.depth = self.depth.max(depth);
        let mut counts = vec![0usize; n_classes];
        for &r in &rows {
            counts[ys[r]] += 1;
        }
        let majority = counts
            .iter()
            .enumerate()
            .max_by_key(|&(label, &c)| (c, usize::MAX - label))
            .map(|(label, _)| label)
            .unwrap_or(0);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;

        let split = if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf
        {
            None
        } else {
            best_split(xs, ys, n_classes, &rows, self.params.min_leaf)
        };

        match split {
            None => {
                self.nodes.push(CartNode::Leaf { label: majority });
                self.leaf_count += 1;
                self.nodes.len() - 1
            }
            Some((feature, threshold)) => {
                let (lrows, rrows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| xs[r][feature] < threshold);
                let left = self.grow(xs, ys, n_classes, lrows, depth + 1);
                let right = self.grow(xs, ys, n_classes, rrows, depth + 1);
                self.nodes.push(CartNode::Split { feature, threshold, left, right });
                self.nodes.len() - 1
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = self.nodes.len() - 1; // root is pushed last
        loop {
            match &self.nodes[at] {
                CartNode::Leaf { label } => return *label,
                CartNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        if xs.is_empty() {
            return 1.0;
        }
        let hits = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / xs.len() as f64
    }
}

/// Exhaustive split search: for every feature, sort the rows and scan
/// boundaries between distinct values. Returns the impurity-minimizing
/// `(feature, midpoint)`; earlier features win ties.
fn best_split(
    xs: &[Vec<f64>],
    ys: &[usize],
    n_classes: usize,
    rows: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = rows.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)

    let mut order: Vec<usize> = rows.to_vec();
    let mut left_counts = vec![0usize; n_classes];
    let mut right_counts = vec![0usize; n_classes];

    for feature in 0..xs[rows[0]].len() {
        order.sort_by(|&a, &b| {
            xs[a][feature].partial_cmp(&xs[b][feature]).unwrap().then(a.cmp(&b))
        });
        left_counts.fill(0);
        right_counts.fill(0);
        for &r in order.iter() {
            right_counts[ys[r]] += 1;
        }
        let mut left_sq = 0.0f64;
        let mut right_sq: f64 = right_counts.iter().map(|&c| (c * c) as f64).sum();

        for k in 0..order.len() - 1 {
            let r = order[k];
            let y = ys[r];
            left_sq += (2 * left_counts[y] + 1) as f64;
            left_counts[y] += 1;
            right_sq -= (2 * right_counts[y] - 1) as f64;
            right_counts[y] -= 1;

            let nl = (k + 1) as f64;
            let nr = n - nl;
            if (k + 1) < min_leaf || (order.len() - k - 1) < min_leaf {
                continue;
            }
            let lo = xs[r][feature];
            let hi = xs[order[k + 1]][feature];
            if hi <= lo {
                continue; // identical values cannot be separated
            }
            // weighted Gini = sum over sides of n_side * (1 - sum p^2)
            let weighted = (nl - left_sq / nl) + (nr - right_sq / nr);
            let threshold = lo + 0.5 * (hi - lo);
            let better = match best {
                None => true,
                Some((w, _, _)) => weighted < w - 1e-12,
            };
            if better {
                best = Some((weighted, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_is_one_leaf() {
        let xs = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let ys = vec![2, 2, 2];
        let tree = TrainedCart::fit(&xs, &ys, CartParams::default());
        assert_eq!(tree.leaf_count, 1);
        assert_eq!(tree.accuracy(&xs, &ys), 1.0);
        assert_eq!(tree.predict(&[100.0, -5.0]), 2);
    }

    #[test]
    fn xor_needs_depth_two() {
        let xs = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let ys = vec![0, 1, 1, 0];
        let shallow =
            TrainedCart::fit(&xs, &ys, CartParams { max_depth: 1, ..Default::default() });
        assert!(shallow.accuracy(&xs, &ys) < 1.0);
        let deep = TrainedCart::fit(&xs, &ys, CartParams { max_depth: 2, ..Default::default() });
        assert_eq!(deep.accuracy(&xs, &ys), 1.0);
    }

    #[test]
    fn memorizes_consistent_data_when_fully_grown() {
        // pseudo-random but deterministic data
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let xs: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| next()).collect()).collect();
        let ys: Vec<usize> = (0..60).map(|i| (i * 7) % 9).collect();
        let tree = TrainedCart::fit(&xs, &ys, CartParams::default());
        assert_eq!(tree.accuracy(&xs, &ys), 1.0);
    }

    #[test]
    fn deterministic_fit() {
        let xs = vec![
            vec![0.3, 1.0],
            vec![0.7, 0.2],
            vec![0.1, 0.5],
            vec![0.9, 0.9],
            vec![0.4, 0.4],
        ];
        let ys = vec![0, 1, 0, 1, 1];
        let a = TrainedCart::fit(&xs, &ys, CartParams::default());
        let b = TrainedCart::fit(&xs, &ys, CartParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn min_leaf_respected() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ys = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let tree = TrainedCart::fit(
            &xs,
            &ys,
            CartParams { min_leaf: 5, ..Default::default() },
        );
        // only one split is possible with both sides of size 5
        assert_eq!(tree.leaf_count, 2);
        assert_eq!(tree.accuracy(&xs, &ys), 1.0);
    }
}
