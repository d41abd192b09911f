//! Random forest of CART trees (Gini impurity, bootstrap samples, random
//! feature subsets).

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_classes, majority_vote};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Minimum samples on each side of a split.
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(F))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 2,
            max_features: None,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum Node<T> {
    Leaf {
        distribution: Vec<T>,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Tree<T> {
    /// Root at index 0.
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    pub fn leaf_distribution(&self, x: ArrayView1<T>) -> &[T] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<T>) -> usize {
        argmax(self.leaf_distribution(x))
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ForestModel<T> {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree<T>>,
}

impl<T: Real> ForestModel<T> {
    fn check(&self, x: ArrayView1<T>) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.n_features),
                got: x.len().to_string(),
            });
        }
        Ok(())
    }

    /// Majority vote of the trees' leaf labels.
    pub fn predict(&self, x: ArrayView1<T>) -> Result<usize> {
        self.check(x)?;
        let votes: Vec<usize> = self.trees.iter().map(|t| t.predict(x)).collect();
        Ok(majority_vote(&votes, self.n_classes))
    }

    /// Mean leaf distribution over trees.
    pub fn predict_proba(&self, x: ArrayView1<T>) -> Result<Vec<T>> {
        self.check(x)?;
        let mut p = vec![T::zero(); self.n_classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.leaf_distribution(x)) {
                *a += *b;
            }
        }
        let n = T::from_usize_lossy(self.trees.len());
        p.iter_mut().for_each(|v| *v /= n);
        Ok(p)
    }
}

struct Builder<'a, T> {
    x: ArrayView2<'a, T>,
    y: &'a [usize],
    n_classes: usize,
    cfg: &'a ForestConfig,
    max_features: usize,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    score: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Sum over children of `sum_c n_c^2 / n`; larger means purer (this is
/// `n - n * weighted_gini`, so maximizing it minimizes Gini).
fn purity(left: &[usize], nl: usize, right: &[usize], nr: usize) -> f64 {
    let side = |c: &[usize], n: usize| c.iter().map(|&v| (v * v) as f64).sum::<f64>() / n as f64;
    side(left, nl) + side(right, nr)
}

impl<T: Real> Builder<'_, T> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_on_feature(&self, idx: &[usize], f: usize, best: &mut Option<BestSplit<T>>) {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.x[[a, f]].partial_cmp(&self.x[[b, f]]).expect("finite features"));
        let n = order.len();
        let mut left = vec![0usize; self.n_classes];
        let mut right = self.counts(idx);
        let mut current = best.as_ref().map_or(f64::NEG_INFINITY, |s| s.score);
        let mut found = None;
        for i in 0..n - 1 {
            let c = self.y[order[i]];
            left[c] += 1;
            right[c] -= 1;
            let nl = i + 1;
            if nl < self.cfg.min_leaf || n - nl < self.cfg.min_leaf {
                continue;
            }
            if !(self.x[[order[i], f]] < self.x[[order[i + 1], f]]) {
                continue;
            }
            let score = purity(&left, nl, &right, n - nl);
            if score > current {
                current = score;
                found = Some(i);
            }
        }
        if let Some(i) = found {
            let (a, b) = (self.x[[order[i], f]], self.x[[order[i + 1], f]]);
            let mut threshold = (a + b) / T::lit(2.0);
            if !(threshold < b) {
                threshold = a;
            }
            *best = Some(BestSplit {
                feature: f,
                threshold,
                score: current,
                left: order[..=i].to_vec(),
                right: order[i + 1..].to_vec(),
            });
        }
    }

    fn find_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit<T>> {
        let n_features = self.x.ncols();
        let mut features: Vec<usize> = (0..n_features).collect();
        if self.max_features < n_features {
            features.shuffle(rng);
        }
        let (first, rest) = features.split_at(self.max_features.min(n_features));
        let mut first = first.to_vec();
        first.sort_unstable();
        let mut best = None;
        for &f in &first {
            self.best_on_feature(idx, f, &mut best);
        }
        // keep drawing features while none of the candidates could split
        for &f in rest {
            if best.is_some() {
                break;
            }
            self.best_on_feature(idx, f, &mut best);
        }
        best
    }

    fn leaf(&self, idx: &[usize]) -> Node<T> {
        let n = T::from_usize_lossy(idx.len());
        Node::Leaf {
            distribution: self.counts(idx).into_iter().map(|c| T::from_usize_lossy(c) / n).collect(),
        }
    }

    fn build(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree<T> {
        let mut nodes: Vec<Node<T>> = vec![self.leaf(&sample)];
        let mut stack = vec![(0usize, sample, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = self.counts(&idx);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
            if pure || !depth_ok || idx.len() < 2 * self.cfg.min_leaf.max(1) {
                continue;
            }
            let Some(split) = self.find_split(&idx, rng) else {
                continue;
            };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(self.leaf(&split.left));
            nodes.push(self.leaf(&split.right));
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
            };
            // right pushed first so the left subtree is expanded first
            stack.push((r, split.right, depth + 1));
            stack.push((l, split.left, depth + 1));
        }
        Tree { nodes }
    }
}

/// Fits `cfg.n_trees` trees in parallel; tree `k` draws from its own
/// random stream, so the result does not depend on scheduling.
pub fn forest_fit<T: Real>(x: ArrayView2<T>, labels: &[usize], n_classes: usize, cfg: &ForestConfig) -> Result<ForestModel<T>> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} rows, {} labels", x.nrows(), labels.len())));
    }
    check_classes(labels, n_classes)?;
    if n_classes < 2 {
        return Err(Error::DegenerateLabels("need at least two classes"));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptyInput("no features"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest training data"));
    }
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be positive".into()));
    }
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| ((x.ncols() as f64).sqrt().floor() as usize).max(1))
        .clamp(1, x.ncols());
    let builder = Builder {
        x,
        y: labels,
        n_classes,
        cfg,
        max_features,
    };
    let n = x.nrows();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(sample, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        n_classes,
        n_features: x.ncols(),
        trees,
    })
}
