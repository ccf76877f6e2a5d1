//! Quantile regression forest.
//!
//! Trees are ordinary CART regression trees (squared-error splits). After a
//! tree is grown on its bootstrap sample, every original training row is
//! dropped down the tree and recorded in the leaf it reaches. A prediction
//! at `x` weights training row `i` by the average over trees of
//! `1[i shares x's leaf] / |leaf|` and reads quantiles off the weighted
//! empirical CDF of the training targets.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::SupervisedSet;
use crate::error::{Error, Result};
use crate::rng;

const FOREST_TAG: u64 = 0x5152_465f_5452_4545;

/// Forest hyperparameters. `mtry = None` resolves to `max(1, p / 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QrfConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for QrfConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl QrfConfig {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or((n_features / 3).max(1))
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter {
                name: "n_trees",
                reason: "must be positive".into(),
            });
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter {
                name: "min_leaf",
                reason: "must be at least 1".into(),
            });
        }
        let mtry = self.resolved_mtry(n_features);
        if mtry == 0 || (n_features > 0 && mtry > n_features) {
            return Err(Error::InvalidParameter {
                name: "mtry",
                reason: alloc::format!("must lie in 1..={n_features}, got {mtry}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Original training rows that fall into this leaf.
        members: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    fn members(&self, leaf: usize) -> &[u32] {
        match &self.nodes[leaf] {
            Node::Leaf { members } => members,
            Node::Split { .. } => &[],
        }
    }
}

/// A fitted quantile regression forest. Answers any level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForest {
    trees: Vec<Tree>,
    n_features: usize,
    targets: Vec<f64>,
    /// Training rows sorted by (target, index).
    order: Vec<u32>,
    config: QrfConfig,
}

struct Grower<'a, R> {
    data: &'a SupervisedSet,
    min_leaf: usize,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    features: Vec<usize>,
    scratch: Vec<(f64, u32)>,
}

impl<R: Rng> Grower<'_, R> {
    /// Best split of `samples` as `(feature, threshold, gain)`.
    fn best_split(&mut self, samples: &[u32]) -> Option<(usize, f64)> {
        let p = self.data.n_features();
        let n = samples.len();
        if p == 0 || n < 2 * self.min_leaf {
            return None;
        }
        let y = self.data.targets();
        let total: f64 = samples.iter().map(|&i| y[i as usize]).sum();
        let first = y[samples[0] as usize];
        if samples.iter().all(|&i| y[i as usize] == first) {
            return None;
        }
        let parent = total * total / n as f64;

        // Partial Fisher-Yates draw of mtry features.
        for j in 0..self.mtry {
            let pick = self.rng.random_range(j..p);
            self.features.swap(j, pick);
        }

        let mut best: Option<(usize, f64, f64)> = None;
        for fi in 0..self.mtry {
            let feature = self.features[fi];
            self.scratch.clear();
            self.scratch
                .extend(samples.iter().map(|&i| (self.data.feature(i as usize, feature), i)));
            self.scratch
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                let (v, i) = self.scratch[pos];
                left_sum += y[i as usize];
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < self.min_leaf {
                    continue;
                }
                if n_right < self.min_leaf {
                    break;
                }
                let next = self.scratch[pos + 1].0;
                if next <= v {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - parent;
                if score > 1e-12 * (1.0 + parent.abs()) && best.is_none_or(|b| score > b.2) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((feature, threshold, score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, root_samples: Vec<u32>) {
        // Depth-first with an explicit stack of (node slot, samples).
        self.nodes.push(Node::Leaf {
            members: Vec::new(),
        });
        let mut stack = vec![(0usize, root_samples)];
        while let Some((slot, samples)) = stack.pop() {
            if let Some((feature, threshold)) = self.best_split(&samples) {
                let (left, right): (Vec<u32>, Vec<u32>) = samples
                    .iter()
                    .partition(|&&i| self.data.feature(i as usize, feature) <= threshold);
                let l = self.nodes.len();
                self.nodes.push(Node::Leaf {
                    members: Vec::new(),
                });
                self.nodes.push(Node::Leaf {
                    members: Vec::new(),
                });
                self.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left: l as u32,
                    right: (l + 1) as u32,
                };
                stack.push((l + 1, right));
                stack.push((l, left));
            }
        }
    }
}

/// Fits a quantile regression forest.
pub fn fit_qrf(data: &SupervisedSet, config: &QrfConfig) -> Result<QuantileForest> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    config.validate(data.n_features())?;
    if n < config.min_leaf {
        return Err(Error::TooFewRows {
            needed: config.min_leaf,
            got: n,
        });
    }
    let p = data.n_features();
    let mtry = config.resolved_mtry(p).min(p.max(1));
    let seed = rng::derive_seed(config.seed, FOREST_TAG);

    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = rng::substream(seed, t as u64);
        let samples: Vec<u32> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut grower = Grower {
            data,
            min_leaf: config.min_leaf,
            mtry: if p == 0 { 0 } else { mtry },
            rng: &mut rng,
            nodes: Vec::new(),
            features: (0..p).collect(),
            scratch: Vec::with_capacity(n),
        };
        grower.grow(samples);
        let mut tree = Tree {
            nodes: grower.nodes,
        };
        for i in 0..n {
            let leaf = tree.leaf_index(data.row(i));
            if let Node::Leaf { members } = &mut tree.nodes[leaf] {
                members.push(i as u32);
            }
        }
        trees.push(tree);
    }

    let targets = data.targets().to_vec();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        targets[a as usize]
            .total_cmp(&targets[b as usize])
            .then(a.cmp(&b))
    });
    Ok(QuantileForest {
        trees,
        n_features: p,
        targets,
        order,
        config: *config,
    })
}

impl QuantileForest {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn config(&self) -> &QrfConfig {
        &self.config
    }

    /// Per-tree leaf sizes in training rows, for every leaf.
    pub fn leaf_sizes(&self) -> Vec<Vec<usize>> {
        self.trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .filter_map(|n| match n {
                        Node::Leaf { members } => Some(members.len()),
                        Node::Split { .. } => None,
                    })
                    .collect()
            })
            .collect()
    }

    /// Training-row weights at `x`; they sum to one.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut w = vec![0.0; self.targets.len()];
        let per_tree = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            let members = tree.members(tree.leaf_index(x));
            if members.is_empty() {
                continue;
            }
            let share = per_tree / members.len() as f64;
            for &i in members {
                w[i as usize] += share;
            }
        }
        Ok(w)
    }

    /// Quantiles at several levels; `taus` need not be sorted.
    pub fn predict_many(&self, x: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let total: f64 = w.iter().sum();
        let mut idx: Vec<usize> = (0..taus.len()).collect();
        idx.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
        let mut out = vec![0.0; taus.len()];
        let mut cum = 0.0;
        let mut pos = 0usize;
        let last = self.targets[*self.order.last().expect("non-empty forest") as usize];
        for &ti in &idx {
            // Left-continuous inverse: smallest y with F(y) >= tau.
            let target = taus[ti] * total - 1e-12;
            while pos < self.order.len() && cum < target {
                cum += w[self.order[pos] as usize];
                pos += 1;
            }
            out[ti] = if pos == 0 {
                // tau so small that the first weighted point already covers it
                self.first_weighted(&w)
            } else if cum >= target {
                self.targets[self.order[pos - 1] as usize]
            } else {
                last
            };
        }
        Ok(out)
    }

    fn first_weighted(&self, w: &[f64]) -> f64 {
        self.order
            .iter()
            .find(|&&i| w[i as usize] > 0.0)
            .map(|&i| self.targets[i as usize])
            .unwrap_or(self.targets[self.order[0] as usize])
    }

    pub fn predict(&self, x: &[f64], tau: f64) -> Result<f64> {
        Ok(self.predict_many(x, &[tau])?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_leaf_is_unconditional_quantile() {
        let d = SupervisedSet::from_rows(
            &[vec![0.3], vec![0.1], vec![0.7], vec![0.5]],
            vec![3.0, 1.0, 4.0, 2.0],
        )
        .unwrap();
        let cfg = QrfConfig {
            n_trees: 1,
            min_leaf: 4,
            bootstrap: false,
            ..QrfConfig::default()
        };
        let f = fit_qrf(&d, &cfg).unwrap();
        // inf{y : F(y) >= 0.5} over {1,2,3,4} with equal weights is 2.
        assert_eq!(f.predict(&[0.2], 0.5).unwrap(), 2.0);
        assert_eq!(f.predict(&[0.2], 0.51).unwrap(), 3.0);
        assert_eq!(f.predict(&[0.2], 0.01).unwrap(), 1.0);
        assert_eq!(f.predict(&[0.2], 0.99).unwrap(), 4.0);
    }

    #[test]
    fn pure_leaves() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let ys = rows
            .iter()
            .map(|r| if r[0] < 0.0 { -5.0 } else { 5.0 })
            .collect();
        let d = SupervisedSet::from_rows(&rows, ys).unwrap();
        let cfg = QrfConfig {
            n_trees: 10,
            min_leaf: 1,
            ..QrfConfig::default()
        };
        let f = fit_qrf(&d, &cfg).unwrap();
        assert_eq!(f.predict(&[1.0], 0.5).unwrap(), 5.0);
        assert_eq!(f.predict(&[-1.0], 0.5).unwrap(), -5.0);
    }

    #[test]
    fn every_row_in_exactly_one_leaf_per_tree() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 5) as f64])
            .collect();
        let ys = (0..50).map(|i| (i % 9) as f64).collect();
        let d = SupervisedSet::from_rows(&rows, ys).unwrap();
        let f = fit_qrf(&d, &QrfConfig::default()).unwrap();
        for sizes in f.leaf_sizes() {
            assert_eq!(sizes.iter().sum::<usize>(), 50);
        }
        let w = f.weights(&[3.0, 1.0]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let d = SupervisedSet::from_rows(&vec![vec![1.0, 2.0]; 6], vec![0.0; 6]).unwrap();
        let bad = QrfConfig {
            mtry: Some(3),
            ..QrfConfig::default()
        };
        assert!(matches!(
            fit_qrf(&d, &bad),
            Err(Error::InvalidParameter { name: "mtry", .. })
        ));
        let bad = QrfConfig {
            min_leaf: 0,
            ..QrfConfig::default()
        };
        assert!(fit_qrf(&d, &bad).is_err());
        let empty = SupervisedSet::targets_only(vec![]).unwrap();
        assert_eq!(fit_qrf(&empty, &QrfConfig::default()), Err(Error::EmptyData));
    }

    #[test]
    fn tied_targets_return_tied_value() {
        let d = SupervisedSet::from_rows(&vec![vec![1.0]; 8], vec![4.0; 8]).unwrap();
        let f = fit_qrf(&d, &QrfConfig::default()).unwrap();
        for tau in [0.01, 0.5, 0.99] {
            assert_eq!(f.predict(&[1.0], tau).unwrap(), 4.0);
        }
    }
}
