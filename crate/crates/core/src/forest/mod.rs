//! Random forest over standardized feature vectors.
//!
//! Every tree is grown to purity on a bootstrap sample of size `n`, choosing
//! each split as the best Gini decrease over `floor(sqrt(d))` randomly drawn
//! features. The forest probability is the mean of the tree probabilities.

mod tree;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, rng_for, stream};

pub use self::tree::{DecisionTree, LeafMode, Node};
use self::tree::{gini_decrease, AuditRecord, Grower};

/// Per-feature affine map to zero mean and unit sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance columns, which pass through unchanged.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid("standardization needs at least two rows"));
        }
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows differ in length"));
        }
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in x {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();
        let constant = std.iter().map(|&s| !(s > 0.0)).collect();
        Ok(Self { mean, std, constant })
    }

    /// Identity map on `d` features.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            constant: vec![true; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.dim(), x.len())));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| if self.constant[j] { v } else { (v - self.mean[j]) / self.std[j] })
            .collect())
    }

    pub fn apply_all(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.apply(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features examined per split; `floor(sqrt(d))` when absent.
    pub max_features: Option<usize>,
    pub leaf_mode: LeafMode,
    pub seed: u64,
    /// Candidate numbers of trees for out-of-bag selection.
    pub grid: Vec<usize>,
    /// Re-verify every split decision after training.
    pub audit: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 200,
            max_features: None,
            leaf_mode: LeafMode::Laplace,
            seed: 0,
            grid: (100..=200).step_by(20).collect(),
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub max_features: usize,
    pub seed: u64,
    pub leaf_mode: LeafMode,
    pub standardizer: Standardizer,
    /// In-bag multiplicity of each training sample per tree; empty for
    /// forests read from disk.
    in_bag: Vec<Vec<u16>>,
}

/// `floor(sqrt(d))`, at least 1.
pub fn default_max_features(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

fn check_training(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("feature rows and labels must be nonempty and of equal length"));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows must share one nonzero length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateClassBalance(format!("{pos} positives among {} samples", y.len())));
    }
    Ok(d)
}

/// Seed of tree `t`. Trees depend only on the master seed and their index,
/// so a forest of `T` trees is a prefix of any larger forest.
fn tree_seed(seed: u64, t: usize) -> u64 {
    derive(derive(seed, stream::FOREST), t as u64)
}

/// Trains a forest on raw features; the standardizer is fitted here and
/// stored with the model.
pub fn train_forest(x: &[Vec<f64>], y: &[u8], cfg: &ForestConfig) -> Result<Forest> {
    let d = check_training(x, y)?;
    if cfg.trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    let standardizer = Standardizer::fit(x)?;
    let xs = standardizer.apply_all(x)?;
    let m = cfg.max_features.unwrap_or_else(|| default_max_features(d)).clamp(1, d);
    let n = x.len();

    let grown: Vec<(DecisionTree, Vec<u16>, Vec<AuditRecord>)> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(tree_seed(cfg.seed, t), 0);
            let mut counts = vec![0u16; n];
            let samples: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    counts[i] = counts[i].saturating_add(1);
                    i
                })
                .collect();
            let mut log = Vec::new();
            let tree = Grower {
                x: &xs,
                y,
                max_features: m,
                audit: cfg.audit.then_some(&mut log),
            }
            .grow(samples, &mut rng);
            (tree, counts, log)
        })
        .collect();

    if cfg.audit {
        for (t, (_, _, log)) in grown.iter().enumerate() {
            audit_splits(&xs, y, log).map_err(|e| Error::invalid(format!("tree {t}: {e}")))?;
        }
    }
    let (trees, in_bag) = grown.into_iter().map(|(t, c, _)| (t, c)).unzip();
    Ok(Forest {
        trees,
        n_features: d,
        max_features: m,
        seed: cfg.seed,
        leaf_mode: cfg.leaf_mode,
        standardizer,
        in_bag,
    })
}

/// Recomputes every examined split by partitioning the node's samples and
/// checks that none beats the chosen one.
fn audit_splits(x: &[Vec<f64>], y: &[u8], log: &[AuditRecord]) -> std::result::Result<(), String> {
    let decrease = |samples: &[usize], f: usize, t: f64| {
        let pos = samples.iter().filter(|&&i| y[i] == 1).count();
        let neg = samples.len() - pos;
        let left: Vec<usize> = samples.iter().copied().filter(|&i| x[i][f] <= t).collect();
        let lp = left.iter().filter(|&&i| y[i] == 1).count();
        gini_decrease(neg, pos, left.len() - lp, lp)
    };
    for rec in log {
        let chosen = decrease(&rec.samples, rec.chosen.0, rec.chosen.1);
        for &(f, t) in &rec.examined {
            let other = decrease(&rec.samples, f, t);
            if other > chosen + 1e-12 {
                return Err(format!(
                    "split ({}, {}) with decrease {chosen} beaten by ({f}, {t}) with {other}",
                    rec.chosen.0, rec.chosen.1
                ));
            }
        }
    }
    Ok(())
}

impl Forest {
    /// Builds a forest from given trees (no out-of-bag records).
    pub fn from_trees(trees: Vec<DecisionTree>, standardizer: Standardizer, leaf_mode: LeafMode, seed: u64) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        let d = standardizer.dim();
        for t in &trees {
            validate_tree(t, d).map_err(Error::invalid)?;
        }
        Ok(Self {
            trees,
            n_features: d,
            max_features: default_max_features(d.max(1)),
            seed,
            leaf_mode,
            standardizer,
            in_bag: Vec::new(),
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean of the tree probabilities of the lesion class, for a raw
    /// (unstandardized) feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_proba_prefix(x, self.trees.len())
    }

    /// Same as [`Forest::predict_proba`] using only the first `t` trees.
    pub fn predict_proba_prefix(&self, x: &[f64], t: usize) -> Result<f64> {
        if t == 0 || t > self.trees.len() {
            return Err(Error::invalid(format!("tree count {t} outside 1..={}", self.trees.len())));
        }
        let z = self.standardizer.apply(x)?;
        let sum: f64 = self.trees[..t].iter().map(|tr| tr.predict(&z, self.leaf_mode)).sum();
        Ok(sum / t as f64)
    }

    pub fn predict_proba_all(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    /// Out-of-bag misclassification rate of the first `t` trees on the
    /// training data, predicting a lesion when the probability exceeds 1/2.
    /// Samples that are in bag for all `t` trees are skipped.
    pub fn oob_error(&self, x: &[Vec<f64>], y: &[u8], t: usize) -> Result<f64> {
        if self.in_bag.is_empty() {
            return Err(Error::NoOutOfBag);
        }
        if t == 0 || t > self.trees.len() {
            return Err(Error::invalid(format!("tree count {t} outside 1..={}", self.trees.len())));
        }
        if x.len() != self.in_bag[0].len() || y.len() != x.len() {
            return Err(Error::invalid("out-of-bag error needs the training data"));
        }
        let per_sample: Vec<Option<bool>> = (0..x.len())
            .into_par_iter()
            .map(|i| -> Result<Option<bool>> {
                let z = self.standardizer.apply(&x[i])?;
                let (mut sum, mut k) = (0.0, 0usize);
                for (tree, bag) in self.trees[..t].iter().zip(&self.in_bag) {
                    if bag[i] == 0 {
                        sum += tree.predict(&z, self.leaf_mode);
                        k += 1;
                    }
                }
                Ok((k > 0).then(|| (sum / k as f64 > 0.5) != (y[i] == 1)))
            })
            .collect::<Result<_>>()?;
        let used: Vec<bool> = per_sample.into_iter().flatten().collect();
        if used.is_empty() {
            return Err(Error::NoOutOfBag);
        }
        Ok(used.iter().filter(|&&e| e).count() as f64 / used.len() as f64)
    }

    /// Keeps the first `t` trees.
    pub fn truncate(&mut self, t: usize) {
        self.trees.truncate(t);
        self.in_bag.truncate(t);
    }
}

/// Result of choosing the number of trees by out-of-bag error.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSelection {
    pub trees: usize,
    /// `(T, oob error)` for every grid value.
    pub errors: Vec<(usize, f64)>,
}

/// Trains one forest with the largest grid value and evaluates the
/// out-of-bag error of each grid prefix; ties go to the smallest `T`.
pub fn select_trees(x: &[Vec<f64>], y: &[u8], cfg: &ForestConfig) -> Result<(Forest, TreeSelection)> {
    let mut grid = cfg.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::invalid("the tree grid must hold positive values"));
    }
    let big = ForestConfig {
        trees: *grid.last().expect("nonempty"),
        ..cfg.clone()
    };
    let mut forest = train_forest(x, y, &big)?;
    let errors = grid
        .iter()
        .map(|&t| forest.oob_error(x, y, t).map(|e| (t, e)))
        .collect::<Result<Vec<_>>>()?;
    let best = errors
        .iter()
        .fold(errors[0], |b, &c| if c.1 < b.1 { c } else { b })
        .0;
    forest.truncate(best);
    Ok((forest, TreeSelection { trees: best, errors }))
}

fn validate_tree(t: &DecisionTree, d: usize) -> std::result::Result<(), String> {
    if t.nodes.is_empty() {
        return Err("empty tree".into());
    }
    for (i, n) in t.nodes.iter().enumerate() {
        match *n {
            Node::Split {
                feature, left, right, threshold,
            } => {
                let ok = (feature as usize) < d
                    && (left as usize) > i
                    && (right as usize) > i
                    && (left as usize) < t.nodes.len()
                    && (right as usize) < t.nodes.len()
                    && !threshold.is_nan();
                if !ok {
                    return Err(format!("malformed split node {i}"));
                }
            }
            Node::Leaf { neg, pos } => {
                if neg + pos == 0 {
                    return Err(format!("empty leaf {i}"));
                }
            }
        }
    }
    Ok(())
}

// Model file layout, little-endian:
//   b"RLRF", u32 version, u32 trees, u32 d, u32 m, u64 seed, u8 leaf mode,
//   standardizer (d means, d stds, d constant flags as u8),
//   then per tree: u32 node count, nodes in preorder
//   (u8 0 + u32 feature + f64 threshold + u32 left + u32 right, or
//    u8 1 + u32 neg + u32 pos).
const MAGIC: &[u8; 4] = b"RLRF";
const VERSION: u32 = 1;

pub fn write_forest(f: &Forest, mut out: impl Write) -> Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(f.trees.len() as u32).to_le_bytes());
    b.extend_from_slice(&(f.n_features as u32).to_le_bytes());
    b.extend_from_slice(&(f.max_features as u32).to_le_bytes());
    b.extend_from_slice(&f.seed.to_le_bytes());
    b.push(match f.leaf_mode {
        LeafMode::Laplace => 0,
        LeafMode::Fraction => 1,
    });
    let s = &f.standardizer;
    for v in s.mean.iter().chain(&s.std) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend(s.constant.iter().map(|&c| u8::from(c)));
    for t in &f.trees {
        b.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
        for n in &t.nodes {
            match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    b.push(0);
                    b.extend_from_slice(&feature.to_le_bytes());
                    b.extend_from_slice(&threshold.to_le_bytes());
                    b.extend_from_slice(&left.to_le_bytes());
                    b.extend_from_slice(&right.to_le_bytes());
                }
                Node::Leaf { neg, pos } => {
                    b.push(1);
                    b.extend_from_slice(&neg.to_le_bytes());
                    b.extend_from_slice(&pos.to_le_bytes());
                }
            }
        }
    }
    out.write_all(&b)?;
    Ok(())
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| Error::format("forest", "truncated file"))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_forest(mut input: impl Read) -> Result<Forest> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { b: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::format("forest", "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format("forest", format!("unsupported version {version}")));
    }
    let n_trees = c.u32()? as usize;
    let d = c.u32()? as usize;
    let m = c.u32()? as usize;
    let seed = c.u64()?;
    let leaf_mode = match c.u8()? {
        0 => LeafMode::Laplace,
        1 => LeafMode::Fraction,
        k => return Err(Error::format("forest", format!("unknown leaf mode {k}"))),
    };
    // Bound allocations by the file size before trusting the counts.
    if d.saturating_mul(17) > bytes.len() || n_trees > bytes.len() {
        return Err(Error::format("forest", "header counts exceed the file size"));
    }
    let mean = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let std = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let constant = (0..d).map(|_| c.u8().map(|v| v != 0)).collect::<Result<Vec<_>>>()?;
    let standardizer = Standardizer { mean, std, constant };
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let count = c.u32()? as usize;
        if count > bytes.len() {
            return Err(Error::format("forest", "node count exceeds the file size"));
        }
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            nodes.push(match c.u8()? {
                0 => Node::Split {
                    feature: c.u32()?,
                    threshold: c.f64()?,
                    left: c.u32()?,
                    right: c.u32()?,
                },
                1 => Node::Leaf {
                    neg: c.u32()?,
                    pos: c.u32()?,
                },
                k => return Err(Error::format("forest", format!("unknown node tag {k}"))),
            });
        }
        trees.push(DecisionTree { nodes });
    }
    if c.pos != bytes.len() {
        return Err(Error::format("forest", "trailing bytes"));
    }
    let mut f = Forest::from_trees(trees, standardizer, leaf_mode, seed).map_err(|e| Error::format("forest", e.to_string()))?;
    f.max_features = m;
    Ok(f)
}

pub fn save_forest(path: impl AsRef<Path>, f: &Forest) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_forest(f, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_forest(path: impl AsRef<Path>) -> Result<Forest> {
    read_forest(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests;
