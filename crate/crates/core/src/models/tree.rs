//! CART regression trees.
//!
//! Splits are axis-aligned thresholds at midpoints between consecutive
//! distinct sorted values, chosen to maximize the reduction in summed squared
//! error. For a split into left/right groups that reduction equals
//! `n_l * n_r / n * (mean_l - mean_r)^2`, which is what is maximized here.
//! Ties go to the lower feature index, then the lower threshold.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_query, check_training_data, ModelError, Regressor};
use crate::data::{Matrix, RngSeed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `usize::MAX` means unbounded.
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Only used by forest bagging and feature subsampling.
    pub seed: RngSeed,
}

impl TreeConfig {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeConfig {
            max_depth,
            min_samples_split: 2,
            seed: RngSeed::default(),
        }
    }

    pub fn unbounded() -> Self {
        Self::with_depth(usize::MAX)
    }

    pub(crate) fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth == 0 {
            return Err(ModelError::InvalidInput("max_depth must be at least 1".into()));
        }
        if self.min_samples_split == 0 {
            return Err(ModelError::InvalidInput("min_samples_split must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
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
    nodes: Vec<Node>,
    n_features: usize,
    descriptor: String,
}

/// Per-split feature subsampling used by forests.
pub(crate) struct FeatureSampler<'a> {
    pub per_split: usize,
    pub rng: &'a mut ChaCha8Rng,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

pub fn fit_tree(features: &Matrix, targets: &[f64], cfg: &TreeConfig) -> Result<RegressionTree, ModelError> {
    check_training_data(features, targets, 2)?;
    cfg.validate()?;
    let samples: Vec<usize> = (0..targets.len()).collect();
    Ok(RegressionTree::grow(features, targets, samples, cfg, None))
}

impl RegressionTree {
    pub(crate) fn grow(
        features: &Matrix,
        targets: &[f64],
        samples: Vec<usize>,
        cfg: &TreeConfig,
        mut sampler: Option<FeatureSampler<'_>>,
    ) -> RegressionTree {
        let descriptor = if cfg.max_depth == usize::MAX {
            "dt-unbounded".to_string()
        } else {
            format!("dt-{}", cfg.max_depth)
        };
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((id, samples, depth)) = stack.pop() {
            let mean = samples.iter().map(|&i| targets[i]).sum::<f64>() / samples.len() as f64;
            let first = targets[samples[0]];
            let pure = samples.iter().all(|&i| targets[i] == first);
            if pure || depth >= cfg.max_depth || samples.len() < cfg.min_samples_split {
                nodes[id] = Node::Leaf(mean);
                continue;
            }
            let candidate_features: Vec<usize> = match sampler.as_mut() {
                Some(s) if s.per_split < features.ncols() => {
                    let mut f = index::sample(s.rng, features.ncols(), s.per_split).into_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..features.ncols()).collect(),
            };
            let Some(best) = best_split(features, targets, &samples, &candidate_features) else {
                nodes[id] = Node::Leaf(mean);
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) = samples
                .into_iter()
                .partition(|&i| features.get(i, best.feature) <= best.threshold);
            let left_id = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: left_id,
                right: left_id + 1,
            };
            // Right first so the left subtree is finished first; the order
            // does not affect the tree, only node numbering.
            stack.push((left_id + 1, right, depth + 1));
            stack.push((left_id, left, depth + 1));
        }
        RegressionTree {
            nodes,
            n_features: features.ncols(),
            descriptor,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn best_split(
    features: &Matrix,
    targets: &[f64],
    samples: &[usize],
    candidate_features: &[usize],
) -> Option<Candidate> {
    let n = samples.len() as f64;
    let total: f64 = samples.iter().map(|&i| targets[i]).sum();
    let mut best: Option<Candidate> = None;
    let mut order = samples.to_vec();
    for &f in candidate_features {
        order.sort_by(|&a, &b| {
            features
                .get(a, f)
                .total_cmp(&features.get(b, f))
                .then(a.cmp(&b))
        });
        let mut left_sum = 0.0;
        for p in 0..order.len() - 1 {
            left_sum += targets[order[p]];
            let here = features.get(order[p], f);
            let next = features.get(order[p + 1], f);
            if here == next {
                continue;
            }
            let nl = (p + 1) as f64;
            let nr = n - nl;
            let diff = left_sum / nl - (total - left_sum) / nr;
            let gain = nl * nr / n * diff * diff;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (here + next);
                if threshold >= next {
                    threshold = here;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

impl Regressor for RegressionTree {
    fn descriptor(&self) -> String {
        self.descriptor.clone()
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_query(features, self.n_features)?;
        Ok(features.rows().map(|r| self.predict_row(r)).collect())
    }
}
