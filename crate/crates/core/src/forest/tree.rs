//! CART classification trees with Gini impurity.
//!
//! Trees are grown on a [`PresortedMatrix`]: every feature column is argsorted
//! once, and each node owns the same `[lo, hi)` range in every per-feature
//! list of sorted entries. A split stably partitions those ranges, so no node
//! ever sorts.
//! Bootstrap samples are represented as per-row multiplicities rather than
//! duplicated rows; Gini sums, thresholds and leaf counts come out identical.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForestError, ForestHyperparams};
use crate::flowdata::ATTACK;
use crate::matrix::Matrix;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `value <= threshold` go left.
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    /// Weighted `[benign, attack]` counts of the training rows reaching this leaf.
    Leaf { class_counts: [u64; 2] },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// Majority class of a leaf; ties go to benign.
#[inline]
pub fn leaf_class(counts: [u64; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

/// A tree stored as a node arena in preorder; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Checks that `nodes` form one well-shaped preorder tree.
    pub fn from_nodes(nodes: Vec<TreeNode>, n_features: usize, max_depth: usize) -> Result<Self, ForestError> {
        let bad = |msg: String| Err(ForestError::InvalidTree(msg));
        if nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("node {i} is reachable twice"));
            }
            match &nodes[i] {
                TreeNode::Leaf { class_counts } => {
                    if class_counts[0].checked_add(class_counts[1]).is_none_or(|t| t == 0) {
                        return bad(format!("leaf {i} has invalid class counts"));
                    }
                }
                TreeNode::Internal { feature, threshold, left, right } => {
                    if *feature >= n_features {
                        return bad(format!("node {i} splits on feature {feature} of {n_features}"));
                    }
                    if !threshold.is_finite() {
                        return bad(format!("node {i} has a non-finite threshold"));
                    }
                    if depth + 1 > max_depth {
                        return bad(format!("node {i} exceeds max depth {max_depth}"));
                    }
                    for &child in [left, right] {
                        if child <= i || child >= nodes.len() {
                            return bad(format!("node {i} has out-of-order child {child}"));
                        }
                        stack.push((child, depth + 1));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return bad(format!("node {orphan} is unreachable"));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        // preorder: parents precede children
        for (i, node) in self.nodes.iter().enumerate() {
            if let TreeNode::Internal { left, right, .. } = node {
                depth[*left] = depth[i] + 1;
                depth[*right] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    pub fn leaf_counts(&self, row: &[f64]) -> [u64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { class_counts } => return *class_counts,
            }
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        leaf_class(self.leaf_counts(row))
    }

    /// The same tree with every node at depth `max_depth` turned into a leaf.
    pub fn truncated(&self, max_depth: usize) -> DecisionTree {
        // subtree class counts, children after parents in preorder
        let mut counts = vec![[0u64; 2]; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate().rev() {
            counts[i] = match node {
                TreeNode::Leaf { class_counts } => *class_counts,
                TreeNode::Internal { left, right, .. } => {
                    [counts[*left][0] + counts[*right][0], counts[*left][1] + counts[*right][1]]
                }
            };
        }
        let mut nodes = Vec::new();
        self.copy_truncated(0, 0, max_depth, &counts, &mut nodes);
        DecisionTree { nodes }
    }

    fn copy_truncated(
        &self,
        i: usize,
        depth: usize,
        max_depth: usize,
        counts: &[[u64; 2]],
        out: &mut Vec<TreeNode>,
    ) -> usize {
        let idx = out.len();
        match &self.nodes[i] {
            TreeNode::Internal { feature, threshold, left, right } if depth < max_depth => {
                out.push(TreeNode::Leaf { class_counts: counts[i] });
                let l = self.copy_truncated(*left, depth + 1, max_depth, counts, out);
                let r = self.copy_truncated(*right, depth + 1, max_depth, counts, out);
                out[idx] = TreeNode::Internal { feature: *feature, threshold: *threshold, left: l, right: r };
            }
            _ => out.push(TreeNode::Leaf { class_counts: counts[i] }),
        }
        idx
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

/// Gini impurity `1 - sum p_i^2` of a two-class count pair.
pub fn gini(class_counts: [u64; 2]) -> Result<f64, ForestError> {
    let total = class_counts[0] + class_counts[1];
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    let n = total as f64;
    let (p0, p1) = (class_counts[0] as f64 / n, class_counts[1] as f64 / n);
    Ok(1.0 - (p0 * p0 + p1 * p1))
}

/// Child class counts of a candidate split.
///
/// With `S = sum_child (c0^2 + c1^2) / n_child`, the weighted child Gini is
/// `1 - S / n`, so the best split maximizes `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct SplitScore {
    pub left: [u64; 2],
    pub right: [u64; 2],
}

impl SplitScore {
    fn n_left(&self) -> u64 {
        self.left[0] + self.left[1]
    }

    fn n_right(&self) -> u64 {
        self.right[0] + self.right[1]
    }

    /// `S` as a float numerator and denominator.
    #[inline]
    fn purity_parts(&self) -> (f64, f64) {
        let sq = |c: [u64; 2]| {
            let (a, b) = (c[0] as f64, c[1] as f64);
            a * a + b * b
        };
        let (nl, nr) = (self.n_left() as f64, self.n_right() as f64);
        (sq(self.left) * nr + sq(self.right) * nl, nl * nr)
    }

    fn purity(&self) -> f64 {
        let (num, den) = self.purity_parts();
        num / den
    }

    pub fn weighted_gini(&self) -> f64 {
        1.0 - self.purity() / (self.n_left() + self.n_right()) as f64
    }

    /// Exact comparison of `S` as a ratio of integers, when it fits in u128.
    fn exact_cmp(&self, other: &Self) -> Option<Ordering> {
        let frac = |s: &Self| -> Option<(u128, u128)> {
            let sq = |c: [u64; 2]| -> Option<u128> {
                (c[0] as u128).checked_mul(c[0] as u128)?.checked_add((c[1] as u128).checked_mul(c[1] as u128)?)
            };
            let (nl, nr) = (s.n_left() as u128, s.n_right() as u128);
            let num = sq(s.left)?.checked_mul(nr)?.checked_add(sq(s.right)?.checked_mul(nl)?)?;
            Some((num, nl.checked_mul(nr)?))
        };
        let (p1, q1) = frac(self)?;
        let (p2, q2) = frac(other)?;
        Some(p1.checked_mul(q2)?.cmp(&p2.checked_mul(q1)?))
    }
}

/// Best split found on one node.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub weighted_gini: f64,
    pub left_counts: [u64; 2],
    pub right_counts: [u64; 2],
}

/// Midpoint threshold strictly below `hi`, so `lo` goes left and `hi` right.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

/// Mathematically equal scores agree to far better than this relative band;
/// inside it the exact integer comparison decides.
const TIE_BAND: f64 = 1e-12;

/// Running best over candidate splits, in (feature, threshold) scan order.
struct BestTracker {
    /// `S` of the current best, or -inf before the first candidate.
    purity: f64,
    best: Option<(SplitScore, usize, f64, f64, usize)>,
}

impl BestTracker {
    fn new() -> Self {
        Self { purity: f64::NEG_INFINITY, best: None }
    }

    /// Offers a candidate whose `S` is `num / den`; `pos` is the number of
    /// sorted entries that go left.
    #[inline(never)]
    fn offer(&mut self, score: SplitScore, num: f64, den: f64, feature: usize, lo: f64, hi: f64, pos: usize) {
        let target = self.purity * den;
        if num <= target * (1.0 + TIE_BAND) {
            if num < target * (1.0 - TIE_BAND) {
                return;
            }
            let Some((best, ..)) = &self.best else { return };
            let better = match score.exact_cmp(best) {
                Some(ord) => ord == Ordering::Greater,
                None => num > target,
            };
            if !better {
                return;
            }
        }
        self.purity = num / den;
        self.best = Some((score, feature, lo, hi, pos));
    }

    fn finish(self) -> Option<(Split, usize)> {
        self.best.map(|(score, feature, lo, hi, pos)| {
            (
                Split {
                    feature,
                    threshold: midpoint(lo, hi),
                    weighted_gini: score.weighted_gini(),
                    left_counts: score.left,
                    right_counts: score.right,
                },
                pos,
            )
        })
    }
}

/// Packs a row index with its class and bootstrap weight.
///
/// Layout: `row << 32 | weight << 1 | class`.
#[inline]
fn pack(row: u32, tag: u32) -> u64 {
    (u64::from(row) << 32) | u64::from(tag)
}

#[inline]
fn entry_row(meta: u64) -> usize {
    (meta >> 32) as usize
}

#[inline]
fn entry_class_weight(meta: u64) -> (usize, u64) {
    ((meta & 1) as usize, (meta as u32 >> 1) as u64)
}

/// Scans one feature's node entries, sorted by ascending value.
///
/// Counts are accumulated in f64, which is exact for any realistic sample
/// size; the integer counts are only rebuilt for candidates that survive the
/// float comparison.
#[inline]
fn scan_sorted(tracker: &mut BestTracker, feature: usize, totals: [u64; 2], vals: &[f64], meta: &[u64]) {
    let Some((&first, rest)) = vals.split_first() else { return };
    let weight = |m: u64| -> (f64, f64) {
        let w = f64::from(m as u32 >> 1);
        let c = f64::from(m as u32 & 1);
        (w - w * c, w * c)
    };
    let (t0, t1) = (totals[0] as f64, totals[1] as f64);
    let n = t0 + t1;
    let (mut l0, mut l1) = weight(meta[0]);
    let mut prev = first;
    for (i, &v) in rest.iter().enumerate() {
        if v > prev {
            let (r0, r1) = (t0 - l0, t1 - l1);
            let nl = l0 + l1;
            let nr = n - nl;
            let num = (l0 * l0 + l1 * l1) * nr + (r0 * r0 + r1 * r1) * nl;
            let den = nl * nr;
            if num >= tracker.purity * den * (1.0 - TIE_BAND) {
                let left = [l0 as u64, l1 as u64];
                let score = SplitScore { left, right: [totals[0] - left[0], totals[1] - left[1]] };
                tracker.offer(score, num, den, feature, prev, v, i + 1);
            }
        }
        let (w0, w1) = weight(meta[i + 1]);
        l0 += w0;
        l1 += w1;
        prev = v;
    }
}

/// Exhaustive best split over `candidate_features` for the rows listed in
/// `rows` (duplicates count as repeated samples).
///
/// Returns `None` when the node is pure or every candidate feature is
/// constant on it. Ties go to the lowest feature index, then the lowest
/// threshold.
pub fn best_split(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    candidate_features: &[usize],
) -> Result<Option<Split>, ForestError> {
    if candidate_features.is_empty() {
        return Err(ForestError::NoCandidateFeatures);
    }
    if let Some(&f) = candidate_features.iter().find(|&&f| f >= x.n_cols()) {
        return Err(ForestError::DimensionMismatch { expected: x.n_cols(), found: f + 1 });
    }
    let mut totals = [0u64; 2];
    for &r in rows {
        totals[usize::from(y[r] == ATTACK)] += 1;
    }
    if totals[0] == 0 || totals[1] == 0 {
        return Ok(None);
    }
    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut tracker = BestTracker::new();
    let mut sorted = rows.to_vec();
    for f in features {
        sorted.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
        let vals: Vec<f64> = sorted.iter().map(|&r| x.get(r, f)).collect();
        let meta: Vec<u64> = sorted.iter().map(|&r| pack(0, 2 | u32::from(y[r] == ATTACK))).collect();
        scan_sorted(&mut tracker, f, totals, &vals, &meta);
    }
    Ok(tracker.finish().map(|(split, _)| split))
}

/// A stable argsort of every feature column, with the sorted values.
#[derive(Clone, Debug)]
pub struct PresortedMatrix {
    n_rows: usize,
    sorted: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl PresortedMatrix {
    pub fn new(x: &Matrix) -> Result<Self, ForestError> {
        if x.n_rows() > u32::MAX as usize >> 1 {
            return Err(ForestError::TooManyRows(x.n_rows()));
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite { row: pos / x.n_cols(), col: pos % x.n_cols() });
        }
        let (sorted, order) = (0..x.n_cols())
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = x.column(j).collect();
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                (idx.iter().map(|&r| col[r as usize]).collect::<Vec<f64>>(), idx)
            })
            .unzip();
        Ok(Self { n_rows: x.n_rows(), sorted, order })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.order.len()
    }
}

/// In-sample entries of one feature, sorted by value within every node range.
struct FeatureList {
    vals: Vec<f64>,
    meta: Vec<u64>,
}

struct TreeBuilder {
    n_cols: usize,
    lists: Vec<FeatureList>,
    goes_left: Vec<bool>,
    scratch_vals: Vec<f64>,
    scratch_meta: Vec<u64>,
    nodes: Vec<TreeNode>,
    max_depth: usize,
    min_samples_split: u64,
    n_candidates: usize,
}

impl TreeBuilder {
    /// `weights[r]` is the multiplicity of row `r` in the sample.
    fn new(data: &PresortedMatrix, y: &[u8], weights: &[u32], hp: &ForestHyperparams) -> Self {
        let tags: Vec<u32> = weights.iter().zip(y).map(|(&w, &c)| (w << 1) | u32::from(c == ATTACK)).collect();
        let lists = data
            .order
            .iter()
            .zip(&data.sorted)
            .map(|(order, sorted)| {
                // branchless compaction: every entry is written, only
                // in-sample ones advance the cursor
                let mut vals = vec![0.0; order.len() + 1];
                let mut meta = vec![0u64; order.len() + 1];
                let mut k = 0;
                for (&r, &v) in order.iter().zip(sorted) {
                    let tag = tags[r as usize];
                    vals[k] = v;
                    meta[k] = pack(r, tag);
                    k += usize::from(tag > 1);
                }
                vals.truncate(k);
                meta.truncate(k);
                FeatureList { vals, meta }
            })
            .collect();
        Self {
            n_cols: data.n_cols(),
            lists,
            goes_left: vec![false; data.n_rows],
            scratch_vals: Vec::new(),
            scratch_meta: Vec::new(),
            nodes: Vec::new(),
            max_depth: hp.max_depth,
            min_samples_split: hp.min_samples_split as u64,
            n_candidates: hp.feature_mode.n_candidates(data.n_cols()),
        }
    }

    fn node_totals(&self) -> [u64; 2] {
        let mut totals = [0u64; 2];
        for &m in self.lists.first().map_or(&[][..], |l| l.meta.as_slice()) {
            let (c, w) = entry_class_weight(m);
            totals[c] += w;
        }
        totals
    }

    fn splittable(&self, depth: usize, counts: [u64; 2]) -> bool {
        depth < self.max_depth && counts[0] > 0 && counts[1] > 0 && counts[0] + counts[1] >= self.min_samples_split
    }

    /// Candidate features of one node, drawn from the node's own seed so the
    /// draw does not depend on how much of the tree has been built.
    fn candidates(&self, node_seed: u64) -> Vec<usize> {
        let d = self.n_cols;
        if self.n_candidates >= d {
            return (0..d).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
        let mut picked = rand::seq::index::sample(&mut rng, d, self.n_candidates).into_vec();
        picked.sort_unstable();
        picked
    }

    fn find_split(&self, lo: usize, hi: usize, features: &[usize], totals: [u64; 2]) -> Option<(Split, usize)> {
        let mut tracker = BestTracker::new();
        for &f in features {
            let list = &self.lists[f];
            scan_sorted(&mut tracker, f, totals, &list.vals[lo..hi], &list.meta[lo..hi]);
        }
        tracker.finish()
    }

    /// Moves the entries of `[lo, hi)` that go left to the front of every list.
    fn partition(&mut self, lo: usize, mid: usize, hi: usize, split_feature: usize) {
        let meta = &self.lists[split_feature].meta;
        for &m in &meta[lo..mid] {
            self.goes_left[entry_row(m)] = true;
        }
        for &m in &meta[mid..hi] {
            self.goes_left[entry_row(m)] = false;
        }
        for (f, list) in self.lists.iter_mut().enumerate() {
            if f == split_feature {
                continue;
            }
            self.scratch_vals.resize(hi - mid + 1, 0.0);
            self.scratch_meta.resize(hi - mid + 1, 0);
            let (mut write, mut spill) = (lo, 0);
            for read in lo..hi {
                let (v, m) = (list.vals[read], list.meta[read]);
                let left = self.goes_left[entry_row(m)];
                // write == read until the first right entry, so this never
                // clobbers an unread slot
                list.vals[write] = v;
                list.meta[write] = m;
                self.scratch_vals[spill] = v;
                self.scratch_meta[spill] = m;
                write += usize::from(left);
                spill += usize::from(!left);
            }
            debug_assert_eq!(write, mid);
            list.vals[mid..hi].copy_from_slice(&self.scratch_vals[..hi - mid]);
            list.meta[mid..hi].copy_from_slice(&self.scratch_meta[..hi - mid]);
        }
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize, counts: [u64; 2], seed: u64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class_counts: counts });
        if !self.splittable(depth, counts) {
            return idx;
        }
        let features = self.candidates(seed);
        let Some((split, mid)) = self.find_split(lo, hi, &features, counts) else {
            return idx;
        };
        let mid = lo + mid;
        if self.splittable(depth + 1, split.left_counts) || self.splittable(depth + 1, split.right_counts) {
            self.partition(lo, mid, hi, split.feature);
        }
        let left = self.build(lo, mid, depth + 1, split.left_counts, derive_seed(seed, 0));
        let right = self.build(mid, hi, depth + 1, split.right_counts, derive_seed(seed, 1));
        self.nodes[idx] = TreeNode::Internal { feature: split.feature, threshold: split.threshold, left, right };
        idx
    }

    fn grow(mut self, root_seed: u64) -> DecisionTree {
        let totals = self.node_totals();
        let m = self.lists.first().map_or(0, |l| l.vals.len());
        self.build(0, m, 0, totals, root_seed);
        DecisionTree { nodes: self.nodes }
    }
}

/// Grows one tree on a weighted sample of `data`.
///
/// `weights` has one multiplicity per row of `data`; rows with weight 0 are
/// out of the sample. At least one weight must be positive.
pub(crate) fn grow_weighted<R: Rng>(
    data: &PresortedMatrix,
    y: &[u8],
    weights: &[u32],
    hp: &ForestHyperparams,
    rng: &mut R,
) -> DecisionTree {
    debug_assert_eq!(weights.len(), data.n_rows());
    let root_seed = rng.random::<u64>();
    TreeBuilder::new(data, y, weights, hp).grow(root_seed)
}

/// Grows a single tree on the rows listed in `row_indices` (repeats allowed,
/// as in a bootstrap sample).
///
/// One seed is drawn from `rng`; every node derives its own seed from it and
/// draws a fresh candidate-feature subset of the size given by the feature
/// mode. Growth stops at `max_depth`, on pure nodes, below
/// `min_samples_split` samples, or when no candidate feature varies.
///
/// Because node draws depend only on the node's path, a tree grown to depth
/// `d` equals a deeper tree from the same stream cut at depth `d`.
pub fn grow_tree<R: Rng>(
    x: &Matrix,
    y: &[u8],
    row_indices: &[usize],
    hp: &ForestHyperparams,
    rng: &mut R,
) -> Result<DecisionTree, ForestError> {
    hp.validate()?;
    if y.len() != x.n_rows() {
        return Err(ForestError::LabelLength { rows: x.n_rows(), labels: y.len() });
    }
    if row_indices.is_empty() {
        return Err(ForestError::EmptySample);
    }
    if let Some(&r) = row_indices.iter().find(|&&r| r >= x.n_rows()) {
        return Err(ForestError::RowOutOfRange { row: r, n_rows: x.n_rows() });
    }
    let data = PresortedMatrix::new(x)?;
    let mut weights = vec![0u32; x.n_rows()];
    for &r in row_indices {
        weights[r] = weights[r].checked_add(1).ok_or(ForestError::TooManyRows(row_indices.len()))?;
    }
    Ok(grow_weighted(&data, y, &weights, hp, rng))
}
