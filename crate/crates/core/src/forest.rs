//! Shallow random forest over binary token features, used only to rank
//! features by total Gini impurity decrease.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `⌈√F⌉`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            max_features: None,
            seed: 0,
        }
    }
}

/// One internal node. `gain` is the weighted impurity decrease
/// `(w_node / w_root) · (gini_node − Σ_child (w_child / w_node) · gini_child)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub depth: usize,
    pub feature: u32,
    pub gain: f64,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    pub splits: Vec<SplitRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl Forest {
    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Total impurity decrease per feature, averaged over trees.
    pub fn importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for tree in &self.trees {
            for s in &tree.splits {
                imp[s.feature as usize] += s.gain;
            }
        }
        if !self.trees.is_empty() {
            let n = self.trees.len() as f64;
            imp.iter_mut().for_each(|v| *v /= n);
        }
        imp
    }
}

fn gini(weight: u64, errors: u64) -> f64 {
    if weight == 0 {
        return 0.0;
    }
    let p = errors as f64 / weight as f64;
    2.0 * p * (1.0 - p)
}

/// Trains the filter forest. Returns an empty forest when the error vector
/// is constant, since no split can discriminate.
pub fn train_filter_forest(matrix: &FeatureMatrix, errors: &[bool], config: &ForestConfig) -> Forest {
    assert_eq!(matrix.n_docs(), errors.len(), "matrix rows must match error labels");
    let n_features = matrix.n_features();
    let n_errors = errors.iter().filter(|e| **e).count();
    if n_errors == 0 || n_errors == errors.len() || n_features == 0 || config.n_trees == 0 {
        return Forest {
            trees: Vec::new(),
            n_features,
        };
    }
    let max_features = config
        .max_features
        .unwrap_or_else(|| libm::ceil(libm::sqrt(n_features as f64)) as usize)
        .clamp(1, n_features);
    let trees = (0..config.n_trees)
        .map(|t| {
            let seed = derive_seed(config.seed, &(t as u64).to_le_bytes());
            grow_tree(matrix, errors, config.max_depth, max_features, seed)
        })
        .collect();
    Forest { trees, n_features }
}

struct Node {
    id: u32,
    depth: usize,
    docs: Vec<u32>,
    weight: u64,
    errors: u64,
}

fn grow_tree(
    matrix: &FeatureMatrix,
    errors: &[bool],
    max_depth: usize,
    max_features: usize,
    seed: u64,
) -> Tree {
    let n = errors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0u64; n];
    for _ in 0..n {
        weights[rng.random_range(0..n)] += 1;
    }
    let mut node_of = vec![u32::MAX; n];
    let mut root_docs = Vec::new();
    let (mut root_w, mut root_e) = (0u64, 0u64);
    for d in 0..n {
        if weights[d] > 0 {
            node_of[d] = 0;
            root_docs.push(d as u32);
            root_w += weights[d];
            root_e += weights[d] * u64::from(errors[d]);
        }
    }

    let mut tree = Tree::default();
    let mut next_id = 1u32;
    let mut stack = vec![Node {
        id: 0,
        depth: 0,
        docs: root_docs,
        weight: root_w,
        errors: root_e,
    }];
    let mut in_feature = vec![false; n];

    while let Some(node) = stack.pop() {
        let impurity = gini(node.weight, node.errors);
        if node.depth >= max_depth || impurity <= 0.0 || node.weight < 2 {
            continue;
        }
        let mut sampled = index::sample(&mut rng, matrix.n_features(), max_features).into_vec();
        sampled.sort_unstable();

        let mut best: Option<(f64, u32)> = None;
        for &f in &sampled {
            let (mut w1, mut e1) = (0u64, 0u64);
            for &d in matrix.column(f as u32) {
                if node_of[d as usize] == node.id {
                    let w = weights[d as usize];
                    w1 += w;
                    e1 += w * u64::from(errors[d as usize]);
                }
            }
            if w1 == 0 || w1 == node.weight {
                continue;
            }
            let (w0, e0) = (node.weight - w1, node.errors - e1);
            let total = node.weight as f64;
            let decrease = impurity
                - (w1 as f64 / total) * gini(w1, e1)
                - (w0 as f64 / total) * gini(w0, e0);
            if decrease > 1e-12 && best.is_none_or(|(b, _)| decrease > b) {
                best = Some((decrease, f as u32));
            }
        }
        let Some((decrease, feature)) = best else {
            continue;
        };
        tree.splits.push(SplitRecord {
            depth: node.depth,
            feature,
            gain: node.weight as f64 / root_w as f64 * decrease,
            weight: node.weight,
        });

        for &d in matrix.column(feature) {
            in_feature[d as usize] = true;
        }
        let (with, without): (Vec<u32>, Vec<u32>) =
            node.docs.iter().partition(|&&d| in_feature[d as usize]);
        for &d in matrix.column(feature) {
            in_feature[d as usize] = false;
        }
        for docs in [without, with] {
            let id = next_id;
            next_id += 1;
            let (mut w, mut e) = (0u64, 0u64);
            for &d in &docs {
                node_of[d as usize] = id;
                w += weights[d as usize];
                e += weights[d as usize] * u64::from(errors[d as usize]);
            }
            stack.push(Node {
                id,
                depth: node.depth + 1,
                docs,
                weight: w,
                errors: e,
            });
        }
    }
    tree
}

/// Features with nonzero importance, most important first (ties by id),
/// truncated to `cap`.
pub fn select_candidates(forest: &Forest, cap: usize) -> Vec<u32> {
    let imp = forest.importances();
    let mut ids: Vec<u32> = (0..imp.len() as u32).filter(|&f| imp[f as usize] > 0.0).collect();
    ids.sort_by(|&a, &b| imp[b as usize].total_cmp(&imp[a as usize]).then(a.cmp(&b)));
    ids.truncate(cap);
    ids
}
