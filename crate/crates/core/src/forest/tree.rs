//! CART classification trees grown to purity with Gini splits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How a leaf turns its class counts into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafMode {
    /// `(pos + 1) / (n + 2)`: never exactly 0 or 1.
    #[default]
    Laplace,
    /// `pos / n`.
    Fraction,
}

impl LeafMode {
    pub fn probability(self, neg: u32, pos: u32) -> f64 {
        match self {
            LeafMode::Laplace => (pos as f64 + 1.0) / ((neg + pos) as f64 + 2.0),
            LeafMode::Fraction => pos as f64 / (neg + pos) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        neg: u32,
        pos: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Preorder: the root is node 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(neg: u32, pos: u32) -> Self {
        Self {
            nodes: vec![Node::Leaf { neg, pos }],
        }
    }

    /// Class counts of the leaf `x` falls into.
    pub fn leaf_counts(&self, x: &[f64]) -> (u32, u32) {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature as usize] <= threshold { left } else { right } as usize,
                Node::Leaf { neg, pos } => return (neg, pos),
            }
        }
    }

    pub fn predict(&self, x: &[f64], mode: LeafMode) -> f64 {
        let (neg, pos) = self.leaf_counts(x);
        mode.probability(neg, pos)
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

pub(crate) fn gini(neg: usize, pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = pos as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Impurity decrease of splitting `(neg, pos)` into the given left part.
pub(crate) fn gini_decrease(neg: usize, pos: usize, left_neg: usize, left_pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    let nl = (left_neg + left_pos) as f64;
    let (rn, rp) = (neg - left_neg, pos - left_pos);
    gini(neg, pos) - (nl / n) * gini(left_neg, left_pos) - ((n - nl) / n) * gini(rn, rp)
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

/// Which of two splits wins: larger decrease, then lower feature, then
/// lower threshold.
fn better(a: &Split, b: &Split) -> bool {
    if a.decrease != b.decrease {
        return a.decrease > b.decrease;
    }
    if a.feature != b.feature {
        return a.feature < b.feature;
    }
    a.threshold < b.threshold
}

/// A split decision kept for auditing: the node's samples, every
/// `(feature, threshold)` pair evaluated and the one chosen.
#[derive(Debug, Clone)]
pub(crate) struct AuditRecord {
    pub samples: Vec<usize>,
    pub examined: Vec<(usize, f64)>,
    pub chosen: (usize, f64),
}

pub(crate) struct Grower<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [u8],
    pub max_features: usize,
    pub audit: Option<&'a mut Vec<AuditRecord>>,
}

impl Grower<'_> {
    /// Grows a tree on `samples` (indices into `x`, repeats allowed).
    pub fn grow(&mut self, samples: Vec<usize>, rng: &mut impl Rng) -> DecisionTree {
        let mut nodes = Vec::new();
        self.node(samples, rng, &mut nodes);
        DecisionTree { nodes }
    }

    fn node(&mut self, samples: Vec<usize>, rng: &mut impl Rng, nodes: &mut Vec<Node>) -> u32 {
        let id = nodes.len() as u32;
        let pos = samples.iter().filter(|&&i| self.y[i] == 1).count();
        let neg = samples.len() - pos;
        nodes.push(Node::Leaf {
            neg: neg as u32,
            pos: pos as u32,
        });
        if pos == 0 || neg == 0 || samples.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(&samples, neg, pos, rng) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.node(l, rng, nodes);
        let right = self.node(r, rng, nodes);
        nodes[id as usize] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Best split over `max_features` random features. When none of them
    /// separates the samples, the remaining features are tried as well.
    fn best_split(&mut self, samples: &[usize], neg: usize, pos: usize, rng: &mut impl Rng) -> Option<Split> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let m = self.max_features.clamp(1, d);
        let mut examined = Vec::new();
        let keep = self.audit.is_some();
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(samples.len());
        for (k, &f) in features.iter().enumerate() {
            if k >= m && best.is_some() {
                break;
            }
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut ln, mut lp) = (0usize, 0usize);
            for j in 0..pairs.len() - 1 {
                if pairs[j].1 == 1 {
                    lp += 1;
                } else {
                    ln += 1;
                }
                let (a, b) = (pairs[j].0, pairs[j + 1].0);
                if a == b {
                    continue;
                }
                let mut threshold = a + (b - a) / 2.0;
                // The midpoint of adjacent floats can round up to `b`.
                if threshold >= b {
                    threshold = a;
                }
                let cand = Split {
                    feature: f,
                    threshold,
                    decrease: gini_decrease(neg, pos, ln, lp),
                };
                if keep {
                    examined.push((f, threshold));
                }
                if best.as_ref().is_none_or(|s| better(&cand, s)) {
                    best = Some(cand);
                }
            }
        }
        if let (Some(log), Some(b)) = (self.audit.as_deref_mut(), best.as_ref()) {
            log.push(AuditRecord {
                samples: samples.to_vec(),
                examined,
                chosen: (b.feature, b.threshold),
            });
        }
        best
    }
}
