//! Bagged CART regression trees, the second layer of the stack.
//!
//! Trees grow breadth-first with exact split search: every midpoint between
//! consecutive distinct values of every sampled feature is scored. Each tree
//! draws its bootstrap sample and feature subsets from its own ChaCha stream
//! keyed by `(seed, tree index)`, so fits are identical however many threads
//! run them.

use std::collections::VecDeque;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 0x0eb7_5eed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EbtError {
    #[error("no training rows")]
    Empty,
    #[error("non-finite training value")]
    NonFinite,
    #[error("length mismatch: {0} rows vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid ensemble config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EbtConfig {
    pub n_learners: usize,
    pub min_leaf: usize,
    /// Split budget per tree; `None` is unbounded.
    pub max_splits: Option<usize>,
    /// Features scored at each node; `None` scores all of them.
    pub n_features_per_split: Option<usize>,
    pub seed: u64,
}

impl EbtConfig {
    /// Full-complexity settings: 375 learners, leaves of one row, no split cap.
    pub fn accuracy() -> Self {
        Self {
            n_learners: 375,
            min_leaf: 1,
            max_splits: None,
            n_features_per_split: None,
            seed: DEFAULT_SEED,
        }
    }

    /// Reduced-latency settings: 60 learners, leaves of at least 8 rows,
    /// 4459 splits per tree (middle of the 2378..=6540 range).
    pub fn latency() -> Self {
        Self {
            n_learners: 60,
            min_leaf: 8,
            max_splits: Some(4459),
            ..Self::accuracy()
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), EbtError> {
        if self.n_learners == 0 || self.min_leaf == 0 {
            return Err(EbtError::Config(
                "n_learners and min_leaf must be positive".into(),
            ));
        }
        if self.max_splits == Some(0) {
            return Err(EbtError::Config("max_splits must be positive".into()));
        }
        match self.n_features_per_split {
            Some(0) => Err(EbtError::Config(
                "n_features_per_split must be positive".into(),
            )),
            Some(k) if k > n_features => Err(EbtError::Config(format!(
                "n_features_per_split {k} exceeds {n_features} features"
            ))),
            _ => Ok(()),
        }
    }
}

impl Default for EbtConfig {
    fn default() -> Self {
        Self::accuracy()
    }
}

/// A node of a flattened tree.
///
/// Splits send `x[feature] <= value` to `left` and the rest to `left + 1`.
/// Leaves carry the mean target in `value` and `feature == LEAF`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub value: f64,
    pub feature: u32,
    pub left: u32,
}

impl Node {
    pub const LEAF: u32 = u32::MAX;

    pub fn is_leaf(&self) -> bool {
        self.feature == Self::LEAF
    }

    fn leaf(value: f64) -> Self {
        Self {
            value,
            feature: Self::LEAF,
            left: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
    pub split_count: usize,
}

impl RegressionTree {
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            i = if x[node.feature as usize] <= node.value {
                node.left as usize
            } else {
                node.left as usize + 1
            };
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        while !self.nodes[i].is_leaf() {
            let node = &self.nodes[i];
            i = node.left as usize + usize::from(x[node.feature as usize] > node.value);
        }
        i
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

fn check_inputs<R: AsRef<[f64]>>(x: &[R], t: &[f64]) -> Result<usize, EbtError> {
    if x.is_empty() {
        return Err(EbtError::Empty);
    }
    if x.len() != t.len() {
        return Err(EbtError::LengthMismatch(x.len(), t.len()));
    }
    let nf = x[0].as_ref().len();
    for r in x {
        let r = r.as_ref();
        if r.len() != nf {
            return Err(EbtError::DimensionMismatch {
                expected: nf,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EbtError::NonFinite);
        }
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(EbtError::NonFinite);
    }
    Ok(nf)
}

struct Split {
    feature: usize,
    threshold: f64,
    n_left: usize,
}

/// Working state for one tree: per-feature index orders over a (possibly
/// repeated) list of training rows. A node owns the same `lo..hi` range in
/// every order.
struct Grower<'a> {
    cols: Vec<Vec<f64>>,
    t: Vec<f64>,
    orders: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    cfg: &'a EbtConfig,
}

impl<'a> Grower<'a> {
    fn new<R: AsRef<[f64]>>(x: &[R], t: &[f64], rows: &[u32], cfg: &'a EbtConfig) -> Self {
        let nf = x[0].as_ref().len();
        let cols: Vec<Vec<f64>> = (0..nf)
            .map(|f| rows.iter().map(|&r| x[r as usize].as_ref()[f]).collect())
            .collect();
        let tt: Vec<f64> = rows.iter().map(|&r| t[r as usize]).collect();
        let orders = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..rows.len() as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self {
            cols,
            t: tt,
            orders,
            goes_left: vec![false; rows.len()],
            scratch: Vec::with_capacity(rows.len()),
            cfg,
        }
    }

    fn node_stats(&self, lo: usize, hi: usize) -> (f64, bool) {
        let o = &self.orders[0][lo..hi];
        let first = self.t[o[0] as usize];
        let mut sum = 0.0;
        let mut pure = true;
        for &k in o {
            let v = self.t[k as usize];
            sum += v;
            pure &= v == first;
        }
        (sum / (hi - lo) as f64, pure)
    }

    fn best_split(&self, lo: usize, hi: usize, features: &[usize]) -> Option<Split> {
        let n = hi - lo;
        let min_leaf = self.cfg.min_leaf;
        let total: f64 = self.orders[0][lo..hi].iter().map(|&k| self.t[k as usize]).sum();
        let mut best: Option<(f64, Split)> = None;
        for &f in features {
            let o = &self.orders[f][lo..hi];
            let col = &self.cols[f];
            let mut sum_left = 0.0;
            for i in 0..n - 1 {
                let k = o[i] as usize;
                sum_left += self.t[k];
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let a = col[k];
                let b = col[o[i + 1] as usize];
                if a == b {
                    continue;
                }
                let sum_right = total - sum_left;
                let gain = sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64;
                if best.as_ref().map_or(true, |(g, _)| gain > *g) {
                    let mid = 0.5 * (a + b);
                    best = Some((
                        gain,
                        Split {
                            feature: f,
                            threshold: if mid < b { mid } else { a },
                            n_left,
                        },
                    ));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn partition(&mut self, lo: usize, hi: usize, split: &Split) {
        let best = &self.orders[split.feature];
        for &k in &best[lo..lo + split.n_left] {
            self.goes_left[k as usize] = true;
        }
        for &k in &best[lo + split.n_left..hi] {
            self.goes_left[k as usize] = false;
        }
        for f in 0..self.orders.len() {
            if f == split.feature {
                continue;
            }
            self.scratch.clear();
            let o = &mut self.orders[f];
            let mut w = lo;
            for i in lo..hi {
                let k = o[i];
                if self.goes_left[k as usize] {
                    o[w] = k;
                    w += 1;
                } else {
                    self.scratch.push(k);
                }
            }
            o[w..hi].copy_from_slice(&self.scratch);
        }
    }

    fn grow(mut self, rng: &mut ChaCha8Rng) -> RegressionTree {
        let nf = self.cols.len();
        let n = self.t.len();
        let max_splits = self.cfg.max_splits.unwrap_or(usize::MAX);
        let mtry = self.cfg.n_features_per_split.unwrap_or(nf).min(nf);
        let all: Vec<usize> = (0..nf).collect();

        let mut nodes = vec![Node::leaf(0.0)];
        let mut queue = VecDeque::from([(0usize, 0usize, n)]);
        let mut split_count = 0;
        while let Some((id, lo, hi)) = queue.pop_front() {
            let (mean, pure) = self.node_stats(lo, hi);
            nodes[id] = Node::leaf(mean);
            if pure || hi - lo < 2 * self.cfg.min_leaf || split_count >= max_splits {
                continue;
            }
            let features = if mtry < nf {
                let mut f = sample_indices(rng, nf, mtry).into_vec();
                f.sort_unstable();
                f
            } else {
                all.clone()
            };
            let Some(split) = self.best_split(lo, hi, &features) else {
                continue;
            };
            self.partition(lo, hi, &split);
            let left = nodes.len();
            nodes.push(Node::leaf(0.0));
            nodes.push(Node::leaf(0.0));
            nodes[id] = Node {
                value: split.threshold,
                feature: split.feature as u32,
                left: left as u32,
            };
            split_count += 1;
            queue.push_back((left, lo, lo + split.n_left));
            queue.push_back((left + 1, lo + split.n_left, hi));
        }
        RegressionTree {
            n_features: nf,
            nodes,
            split_count,
        }
    }
}

fn tree_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fits one tree on all rows of `x`, using `rng` only for feature sampling.
pub fn fit_tree<R: AsRef<[f64]>>(
    x: &[R],
    t: &[f64],
    cfg: &EbtConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RegressionTree, EbtError> {
    let nf = check_inputs(x, t)?;
    cfg.validate(nf)?;
    let rows: Vec<u32> = (0..x.len() as u32).collect();
    Ok(Grower::new(x, t, &rows, cfg).grow(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedEnsemble {
    pub config: EbtConfig,
    pub trees: Vec<RegressionTree>,
    /// Sorted distinct in-bag rows per tree. Not persisted.
    #[serde(skip)]
    pub in_bag: Vec<Vec<u32>>,
    /// Out-of-bag RMSE over rows left out by at least one tree.
    pub oob_rmse: Option<f64>,
}

/// Fits `n_learners` trees on bootstrap resamples of the rows.
pub fn fit_ebt<R: AsRef<[f64]> + Sync>(
    x: &[R],
    t: &[f64],
    cfg: &EbtConfig,
) -> Result<BaggedEnsemble, EbtError> {
    let nf = check_inputs(x, t)?;
    cfg.validate(nf)?;
    let n = x.len();
    let fitted: Vec<(RegressionTree, Vec<u32>)> = (0..cfg.n_learners)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(cfg.seed, i as u64);
            let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            let mut distinct = rows.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let tree = Grower::new(x, t, &rows, cfg).grow(&mut rng);
            (tree, distinct)
        })
        .collect();
    let (trees, in_bag): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let mut ens = BaggedEnsemble {
        config: *cfg,
        trees,
        in_bag,
        oob_rmse: None,
    };
    ens.oob_rmse = ens.oob_error(x, t);
    Ok(ens)
}

impl BaggedEnsemble {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s = self.trees.iter().fold(0.0, |acc, t| acc + t.predict_row(x));
        s / self.trees.len() as f64
    }

    /// Same values as row-wise [`Self::predict_row`], walking one tree over
    /// all rows at a time so each tree stays cache resident.
    pub fn predict_batch(&self, x: &[[f64; 4]]) -> Vec<f64> {
        let mut acc = vec![0.0; x.len()];
        for t in &self.trees {
            for (a, r) in acc.iter_mut().zip(x) {
                *a += t.predict_row(r);
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn predict<R: AsRef<[f64]>>(&self, x: &[R]) -> Result<Vec<f64>, EbtError> {
        let nf = self.n_features();
        x.iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != nf {
                    Err(EbtError::DimensionMismatch {
                        expected: nf,
                        got: r.len(),
                    })
                } else {
                    Ok(self.predict_row(r))
                }
            })
            .collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    fn oob_error<R: AsRef<[f64]>>(&self, x: &[R], t: &[f64]) -> Option<f64> {
        if self.in_bag.len() != self.trees.len() {
            return None;
        }
        let n = x.len();
        let mut sum = vec![0.0; n];
        let mut count = vec![0u32; n];
        for (tree, bag) in self.trees.iter().zip(&self.in_bag) {
            let mut b = bag.iter().peekable();
            for row in 0..n {
                if b.peek() == Some(&&(row as u32)) {
                    b.next();
                    continue;
                }
                sum[row] += tree.predict_row(x[row].as_ref());
                count[row] += 1;
            }
        }
        let (mut sse, mut m) = (0.0, 0usize);
        for row in 0..n {
            if count[row] > 0 {
                let p = sum[row] / count[row] as f64;
                sse += (t[row] - p) * (t[row] - p);
                m += 1;
            }
        }
        (m > 0).then(|| (sse / m as f64).sqrt())
    }
}
