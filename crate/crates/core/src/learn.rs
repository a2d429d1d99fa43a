//! Optimal classification trees: a Gini-greedy warm start refined by local
//! search on the true objective `R(T) + α·splits`, where `R` is the weighted
//! misclassification fraction on the training data.
//!
//! Local search visits the nodes of the current tree in random order and
//! tries to replace the subtree rooted there by
//! - a leaf,
//! - one of its children,
//! - the same children under the best axis-aligned split,
//! - the same children under a coordinate-descent improvement of the
//!   hyperplane split (only when the split complexity allows it),
//! - for a leaf above the depth limit, a new split with two leaves.
//!
//! The best strictly improving candidate is taken; a pass ends after every
//! node was visited, and the search stops after a pass without improvement.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Target};
use crate::hash::sha256_hex;
use crate::tree::{Node, Split, TieBreak, Tree};
use crate::{Error, Result};

/// Improvements smaller than this are not improvements.
pub const IMPROVEMENT_TOL: f64 = 1e-12;
const MAX_DESCENT_SWEEPS: usize = 8;

/// Training matrix in both row and column layout.
#[derive(Debug, Clone)]
pub struct TrainData {
    n: usize,
    p: usize,
    k: usize,
    rows: Vec<f64>,
    cols: Vec<Vec<f64>>,
    y: Vec<usize>,
    w: Vec<f64>,
    total_weight: f64,
    pub classes: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target: Option<Target>,
}

impl TrainData {
    /// `x` is row-major `n × p`; `y` holds class indices into `classes`.
    pub fn new(
        x: Vec<f64>,
        p: usize,
        y: Vec<usize>,
        w: Vec<f64>,
        classes: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Input("training data is empty".into()));
        }
        if x.len() != n * p || w.len() != n || feature_names.len() != p {
            return Err(Error::Input("training data has inconsistent dimensions".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("training features must be finite".into()));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input("weights must be finite and nonnegative".into()));
        }
        let k = classes.len();
        if y.iter().any(|&c| c >= k) {
            return Err(Error::Input("class index outside the class list".into()));
        }
        let total_weight: f64 = w.iter().sum();
        if total_weight <= 0.0 {
            return Err(Error::Input("weights must have a positive sum".into()));
        }
        let cols = (0..p).map(|j| (0..n).map(|i| x[i * p + j]).collect()).collect();
        Ok(Self {
            n,
            p,
            k,
            rows: x,
            cols,
            y,
            w,
            total_weight,
            classes,
            feature_names,
            target: None,
        })
    }

    pub fn from_dataset(ds: &Dataset, target: Target) -> Result<Self> {
        ds.validate()?;
        let (y, classes) = ds.classes(target)?;
        let names = ds.gauge_ids.iter().map(|id| format!("gauge_{id}")).collect();
        let mut d = Self::new(ds.x.clone(), ds.p(), y, ds.weights.clone(), classes, names)?;
        d.target = Some(target);
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    fn counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.k];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_depth: usize,
    /// Largest number of features in one split; 1 gives axis-aligned trees.
    pub max_split_complexity: usize,
    pub alpha: f64,
    pub min_leaf: usize,
    pub restarts: usize,
    pub max_local_search_passes: usize,
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            max_split_complexity: 1,
            alpha: 0.0,
            min_leaf: 1,
            restarts: 20,
            max_local_search_passes: 50,
            seed: 0,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_split_complexity == 0 {
            return Err(Error::Input("split complexity must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Input("alpha must be finite and nonnegative".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Input("minimum leaf size must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Input("at least one restart is required".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn axis_only(&self) -> Self {
        Self {
            max_split_complexity: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub misclassification: f64,
    pub n_splits: usize,
    pub alpha: f64,
    pub value: f64,
}

impl Objective {
    fn new(err_weight: f64, total_weight: f64, n_splits: usize, alpha: f64) -> Self {
        let misclassification = err_weight / total_weight;
        Self {
            misclassification,
            n_splits,
            alpha,
            value: misclassification + alpha * n_splits as f64,
        }
    }
}

/// `R(T) + α·splits` of `tree` on `data`, classifying with the tree's own leaves.
pub fn objective(tree: &Tree, data: &TrainData, alpha: f64) -> Result<Objective> {
    if tree.n_features() != data.p {
        return Err(Error::Input("tree and data have different feature counts".into()));
    }
    let mut err = 0.0;
    for i in 0..data.n {
        if tree.classify(data.row(i))? != data.y[i] {
            err += data.w[i];
        }
    }
    Ok(Objective::new(err, data.total_weight, tree.n_splits(), alpha))
}

// ---------------------------------------------------------------------------
// subtree evaluation

/// Depth-first leaf index of every point in `idx`.
fn leaf_assign(node: &Node, data: &TrainData, idx: &[usize]) -> (Vec<u32>, usize) {
    let a = idx.iter().map(|&i| node.route(data.row(i)).1 as u32).collect();
    (a, node.n_leaves())
}

struct Eval {
    err: f64,
    valid: bool,
}

/// Error of `node` on `idx` with every leaf relabeled to its majority class,
/// and whether every leaf keeps at least `min_leaf` points.
fn subtree_eval(node: &Node, data: &TrainData, idx: &[usize], min_leaf: usize) -> Eval {
    let (a, nl) = leaf_assign(node, data, idx);
    let mut t = Tally::new(nl, data.k, min_leaf);
    for (pos, &i) in idx.iter().enumerate() {
        t.add(a[pos] as usize, data.y[i], data.w[i]);
    }
    Eval {
        err: t.exact_error(),
        valid: t.under == 0,
    }
}

/// Per-leaf class counts supporting incremental moves of single points.
struct Tally {
    k: usize,
    counts: Vec<f64>,
    total: Vec<f64>,
    points: Vec<usize>,
    max: Vec<f64>,
    err: f64,
    under: usize,
    min_leaf: usize,
}

impl Tally {
    fn new(n_leaves: usize, k: usize, min_leaf: usize) -> Self {
        Self {
            k,
            counts: vec![0.0; n_leaves * k],
            total: vec![0.0; n_leaves],
            points: vec![0; n_leaves],
            max: vec![0.0; n_leaves],
            err: 0.0,
            under: if min_leaf > 0 { n_leaves } else { 0 },
            min_leaf,
        }
    }

    fn add(&mut self, leaf: usize, class: usize, w: f64) {
        let old = self.total[leaf] - self.max[leaf];
        let c = &mut self.counts[leaf * self.k + class];
        *c += w;
        if *c > self.max[leaf] {
            self.max[leaf] = *c;
        }
        self.total[leaf] += w;
        self.err += self.total[leaf] - self.max[leaf] - old;
        self.points[leaf] += 1;
        if self.points[leaf] == self.min_leaf {
            self.under -= 1;
        }
    }

    fn remove(&mut self, leaf: usize, class: usize, w: f64) {
        let old = self.total[leaf] - self.max[leaf];
        let base = leaf * self.k;
        let was_max = self.counts[base + class] >= self.max[leaf];
        self.counts[base + class] -= w;
        self.total[leaf] -= w;
        if was_max {
            self.max[leaf] = self.counts[base..base + self.k].iter().cloned().fold(0.0, f64::max);
        }
        self.err += self.total[leaf] - self.max[leaf] - old;
        if self.points[leaf] == self.min_leaf {
            self.under += 1;
        }
        self.points[leaf] -= 1;
    }

    /// Error summed afresh, free of incremental rounding.
    fn exact_error(&self) -> f64 {
        (0..self.total.len())
            .map(|l| {
                let c = &self.counts[l * self.k..(l + 1) * self.k];
                c.iter().sum::<f64>() - c.iter().cloned().fold(0.0, f64::max)
            })
            .sum()
    }
}

/// Threshold strictly between two sorted projections `lo < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + 0.5 * (hi - lo);
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}

/// Children of a node being re-split: each point's leaf in either child.
struct Children<'a> {
    left: &'a [u32],
    n_left: usize,
    right: &'a [u32],
    n_right: usize,
}

/// Best threshold on projections `z` (aligned with `idx`), keeping the
/// children fixed. Returns `(threshold, error)` of the lowest-error valid
/// threshold, the smallest one on ties.
fn best_threshold(data: &TrainData, idx: &[usize], z: &[f64], ch: &Children, min_leaf: usize) -> Option<(f64, f64)> {
    let m = idx.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let mut tl = Tally::new(ch.n_left, data.k, min_leaf);
    let mut tr = Tally::new(ch.n_right, data.k, min_leaf);
    for (pos, &i) in idx.iter().enumerate() {
        tr.add(ch.right[pos] as usize, data.y[i], data.w[i]);
    }
    let mut best: Option<(f64, f64)> = None;
    for r in 0..m.saturating_sub(1) {
        let pos = order[r];
        let i = idx[pos];
        tr.remove(ch.right[pos] as usize, data.y[i], data.w[i]);
        tl.add(ch.left[pos] as usize, data.y[i], data.w[i]);
        let (lo, hi) = (z[pos], z[order[r + 1]]);
        if lo < hi && tl.under == 0 && tr.under == 0 {
            let err = tl.err + tr.err;
            if best.is_none_or(|(_, e)| err < e - IMPROVEMENT_TOL) {
                best = Some((midpoint(lo, hi), err));
            }
        }
    }
    best
}

/// Best axis-aligned split of `idx` over all features with the given children,
/// ties to the lowest feature index.
fn best_axis_split(data: &TrainData, idx: &[usize], ch: &Children, min_leaf: usize) -> Option<(Split, f64)> {
    let mut best: Option<(Split, f64)> = None;
    let mut z = vec![0.0; idx.len()];
    for j in 0..data.p {
        let col = &data.cols[j];
        for (pos, &i) in idx.iter().enumerate() {
            z[pos] = col[i];
        }
        if let Some((thr, err)) = best_threshold(data, idx, &z, ch, min_leaf) {
            if best.as_ref().is_none_or(|(_, e)| err < e - IMPROVEMENT_TOL) {
                best = Some((Split::axis(j, thr), err));
            }
        }
    }
    best
}

/// Sides and error of `split` over `idx` with fixed children.
fn split_error(data: &TrainData, idx: &[usize], split: &Split, ch: &Children, min_leaf: usize) -> Option<f64> {
    let mut tl = Tally::new(ch.n_left, data.k, min_leaf);
    let mut tr = Tally::new(ch.n_right, data.k, min_leaf);
    for (pos, &i) in idx.iter().enumerate() {
        if split.goes_left(data.row(i)) {
            tl.add(ch.left[pos] as usize, data.y[i], data.w[i]);
        } else {
            tr.add(ch.right[pos] as usize, data.y[i], data.w[i]);
        }
    }
    (tl.under == 0 && tr.under == 0).then(|| tl.exact_error() + tr.exact_error())
}

fn with_coefficient(split: &Split, j: usize, c: f64) -> Vec<(usize, f64)> {
    let mut coef: Vec<(usize, f64)> = split.coefficients.iter().cloned().filter(|&(f, _)| f != j).collect();
    if c != 0.0 {
        coef.push((j, c));
        coef.sort_by_key(|&(f, _)| f);
    }
    coef
}

/// Best value of the coefficient of feature `j`, threshold fixed, found by
/// sweeping the breakpoints where points change side. Returns `(c, error)`.
fn best_coefficient(
    data: &TrainData,
    idx: &[usize],
    split: &Split,
    j: usize,
    ch: &Children,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let b = split.threshold;
    let aj = split.coefficients.iter().find(|&&(f, _)| f == j).map_or(0.0, |&(_, c)| c);
    let mut tl = Tally::new(ch.n_left, data.k, min_leaf);
    let mut tr = Tally::new(ch.n_right, data.k, min_leaf);
    // (breakpoint, position, moves_to_right)
    let mut events: Vec<(f64, usize, bool)> = Vec::new();
    for (pos, &i) in idx.iter().enumerate() {
        let xj = data.cols[j][i];
        let base = split.value(data.row(i)) - aj * xj;
        // as c → -∞ a point with xj > 0 is left and one with xj < 0 right
        let left = if xj > 0.0 {
            true
        } else if xj < 0.0 {
            false
        } else {
            base < b
        };
        if left {
            tl.add(ch.left[pos] as usize, data.y[i], data.w[i]);
        } else {
            tr.add(ch.right[pos] as usize, data.y[i], data.w[i]);
        }
        if xj != 0.0 {
            events.push(((b - base) / xj, pos, xj > 0.0));
        }
    }
    if events.is_empty() {
        return None;
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    let consider = |c: f64, err: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none_or(|(_, e)| err < e - IMPROVEMENT_TOL) {
            *best = Some((c, err));
        }
    };
    let first = events[0].0;
    if tl.under == 0 && tr.under == 0 {
        consider(first - 1.0 - first.abs(), tl.err + tr.err, &mut best);
    }
    let mut e = 0;
    while e < events.len() {
        let c = events[e].0;
        while e < events.len() && events[e].0 == c {
            let (_, pos, to_right) = events[e];
            let i = idx[pos];
            if to_right {
                tl.remove(ch.left[pos] as usize, data.y[i], data.w[i]);
                tr.add(ch.right[pos] as usize, data.y[i], data.w[i]);
            } else {
                tr.remove(ch.right[pos] as usize, data.y[i], data.w[i]);
                tl.add(ch.left[pos] as usize, data.y[i], data.w[i]);
            }
            e += 1;
        }
        if tl.under == 0 && tr.under == 0 {
            let cand = if e < events.len() {
                midpoint(c, events[e].0)
            } else {
                c + 1.0 + c.abs()
            };
            consider(cand, tl.err + tr.err, &mut best);
        }
    }
    best
}

/// Coordinate descent on the hyperplane `split` with fixed children. Each sweep
/// tries every feature once (retune if present, add if the budget allows,
/// remove by setting zero), retuning the threshold after every accepted
/// coordinate. Returns the improved split and its error, if any.
fn descend_hyperplane(
    data: &TrainData,
    idx: &[usize],
    split: &Split,
    ch: &Children,
    budget: usize,
    min_leaf: usize,
) -> Option<(Split, f64)> {
    let start = split_error(data, idx, split, ch, min_leaf)?;
    let mut cur = split.clone();
    let mut cur_err = start;
    let mut z = vec![0.0; idx.len()];
    for _ in 0..MAX_DESCENT_SWEEPS {
        let mut improved = false;
        for j in 0..data.p {
            let present = cur.coefficients.iter().any(|&(f, _)| f == j);
            if !present && cur.sparsity() >= budget {
                continue;
            }
            let mut cand: Option<(Vec<(usize, f64)>, f64)> = None;
            if let Some((c, err)) = best_coefficient(data, idx, &cur, j, ch, min_leaf) {
                if err < cur_err - IMPROVEMENT_TOL {
                    cand = Some((with_coefficient(&cur, j, c), err));
                }
            }
            if present && cur.sparsity() > 1 {
                let coef = with_coefficient(&cur, j, 0.0);
                let s = Split {
                    coefficients: coef.clone(),
                    threshold: cur.threshold,
                };
                if let Some(err) = split_error(data, idx, &s, ch, min_leaf) {
                    let bar = cand.as_ref().map_or(cur_err - IMPROVEMENT_TOL, |(_, e)| *e);
                    if err <= bar {
                        cand = Some((coef, err));
                    }
                }
            }
            let Some((coef, _)) = cand else { continue };
            let mut next = Split {
                coefficients: coef,
                threshold: cur.threshold,
            };
            for (pos, &i) in idx.iter().enumerate() {
                z[pos] = next.value(data.row(i));
            }
            if let Some((thr, _)) = best_threshold(data, idx, &z, ch, min_leaf) {
                let retuned = Split {
                    threshold: thr,
                    ..next.clone()
                };
                if let (Some(a), Some(b)) = (
                    split_error(data, idx, &retuned, ch, min_leaf),
                    split_error(data, idx, &next, ch, min_leaf),
                ) {
                    if a <= b {
                        next = retuned;
                    }
                }
            }
            if let Some(err) = split_error(data, idx, &next, ch, min_leaf) {
                if err < cur_err - IMPROVEMENT_TOL {
                    cur = next;
                    cur_err = err;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (cur_err < start - IMPROVEMENT_TOL).then_some((cur, cur_err))
}

/// Solves `a·x = b` for a dense `n × n` row-major system by Gaussian
/// elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let piv = (c..n).max_by(|&r, &s| a[r * n + c].abs().total_cmp(&a[s * n + c].abs()))?;
        if a[piv * n + c] == 0.0 {
            return None;
        }
        if piv != c {
            for k in 0..n {
                a.swap(piv * n + k, c * n + k);
            }
            b.swap(piv, c);
        }
        for r in c + 1..n {
            let f = a[r * n + c] / a[c * n + c];
            if f != 0.0 {
                for k in c..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c * n + k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c * n + c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Regularized Fisher discriminant between two weighted groups of points,
/// over the given features.
fn fisher(data: &TrainData, groups: &[(usize, bool)], features: &[usize]) -> Option<Vec<f64>> {
    let q = features.len();
    let mut wsum = [0.0; 2];
    let mut mean = [vec![0.0; q], vec![0.0; q]];
    for &(i, right) in groups {
        let g = usize::from(right);
        wsum[g] += data.w[i];
        for (a, &j) in features.iter().enumerate() {
            mean[g][a] += data.w[i] * data.cols[j][i];
        }
    }
    if wsum[0] <= 0.0 || wsum[1] <= 0.0 {
        return None;
    }
    for g in 0..2 {
        mean[g].iter_mut().for_each(|m| *m /= wsum[g]);
    }
    let mut cov = vec![0.0; q * q];
    let mut d = vec![0.0; q];
    for &(i, right) in groups {
        let g = usize::from(right);
        for (a, &j) in features.iter().enumerate() {
            d[a] = data.cols[j][i] - mean[g][a];
        }
        for a in 0..q {
            for b in 0..q {
                cov[a * q + b] += data.w[i] * d[a] * d[b];
            }
        }
    }
    let ridge = 1e-6 * (0..q).map(|a| cov[a * q + a]).sum::<f64>() / q as f64 + f64::MIN_POSITIVE;
    for a in 0..q {
        cov[a * q + a] += ridge;
    }
    let diff: Vec<f64> = (0..q).map(|a| mean[1][a] - mean[0][a]).collect();
    solve_dense(cov, diff, q)
}

/// Hyperplane seeded by a Fisher discriminant. Points are assigned to the side
/// whose subtree (labelled by the current split's routing) classifies them
/// correctly; points that both or neither side get right are ignored. With a
/// budget below the feature count the largest standardized coefficients are
/// kept and the discriminant is refitted on them.
fn fisher_seed(data: &TrainData, idx: &[usize], split: &Split, ch: &Children, budget: usize, min_leaf: usize) -> Option<Split> {
    let k = data.k;
    let mut cl = vec![0.0; ch.n_left * k];
    let mut cr = vec![0.0; ch.n_right * k];
    let sides: Vec<bool> = idx.iter().map(|&i| !split.goes_left(data.row(i))).collect();
    for (pos, &i) in idx.iter().enumerate() {
        if sides[pos] {
            cr[ch.right[pos] as usize * k + data.y[i]] += data.w[i];
        } else {
            cl[ch.left[pos] as usize * k + data.y[i]] += data.w[i];
        }
    }
    let label = |c: &[f64], leaf: usize| {
        let s = &c[leaf * k..(leaf + 1) * k];
        (0..k).fold(0, |b, j| if s[j] > s[b] { j } else { b })
    };
    let groups: Vec<(usize, bool)> = idx
        .iter()
        .enumerate()
        .filter_map(|(pos, &i)| {
            let ok_l = label(&cl, ch.left[pos] as usize) == data.y[i];
            let ok_r = label(&cr, ch.right[pos] as usize) == data.y[i];
            (ok_l != ok_r).then_some((i, ok_r))
        })
        .collect();
    let all: Vec<usize> = (0..data.p).collect();
    let mut features = all.clone();
    let mut w = fisher(data, &groups, &features)?;
    if budget < data.p {
        let sd = |j: usize| {
            let m = idx.iter().map(|&i| data.cols[j][i]).sum::<f64>() / idx.len() as f64;
            (idx.iter().map(|&i| (data.cols[j][i] - m).powi(2)).sum::<f64>() / idx.len() as f64).sqrt()
        };
        let mut rank: Vec<(usize, f64)> = all.iter().map(|&j| (j, (w[j] * sd(j)).abs())).collect();
        rank.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        features = rank.iter().take(budget).map(|&(j, _)| j).collect();
        features.sort_unstable();
        w = fisher(data, &groups, &features)?;
    }
    let scale = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let coefficients: Vec<(usize, f64)> = features.iter().zip(&w).map(|(&j, &c)| (j, c / scale)).filter(|&(_, c)| c != 0.0).collect();
    let probe = Split { coefficients, threshold: 0.0 };
    let z: Vec<f64> = idx.iter().map(|&i| probe.value(data.row(i))).collect();
    let (thr, _) = best_threshold(data, idx, &z, ch, min_leaf)?;
    Some(Split { threshold: thr, ..probe })
}

/// Best hyperplane improvement of `split` with fixed children: coordinate
/// descent from the current split and from a Fisher seed.
fn improve_hyperplane(data: &TrainData, idx: &[usize], split: &Split, ch: &Children, budget: usize, min_leaf: usize) -> Option<(Split, f64)> {
    let start = split_error(data, idx, split, ch, min_leaf)?;
    let mut best = descend_hyperplane(data, idx, split, ch, budget, min_leaf);
    if let Some(seed) = fisher_seed(data, idx, split, ch, budget, min_leaf) {
        if let Some(seed_err) = split_error(data, idx, &seed, ch, min_leaf) {
            let (s, e) = descend_hyperplane(data, idx, &seed, ch, budget, min_leaf).unwrap_or((seed, seed_err));
            let bar = best.as_ref().map_or(start, |(_, b)| *b);
            if e < bar - IMPROVEMENT_TOL {
                best = Some((s, e));
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// greedy initialization

fn gini_cost(counts: &[f64]) -> f64 {
    let t: f64 = counts.iter().sum();
    if t <= 0.0 {
        return 0.0;
    }
    t - counts.iter().map(|c| c * c).sum::<f64>() / t
}

fn is_pure(data: &TrainData, idx: &[usize]) -> bool {
    idx.iter().all(|&i| data.y[i] == data.y[idx[0]])
}

/// Axis split of `idx` minimizing weighted Gini impurity among `features`.
/// Equal impurities go to the more balanced split: with one point per class
/// every split has the same impurity, and peeling off single points would
/// waste the depth budget.
fn best_gini_split(data: &TrainData, idx: &[usize], features: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let m = idx.len();
    let total = data.counts(idx);
    let total_w: f64 = total.iter().sum();
    let tol = IMPROVEMENT_TOL * total_w.max(1.0);
    let mut best: Option<(usize, f64, f64, f64)> = None;
    let mut sorted = idx.to_vec();
    for &j in features {
        let col = &data.cols[j];
        sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut left = vec![0.0; data.k];
        for r in 0..m - 1 {
            let i = sorted[r];
            left[data.y[i]] += data.w[i];
            let (lo, hi) = (col[i], col[sorted[r + 1]]);
            if lo == hi || r + 1 < min_leaf || m - r - 1 < min_leaf {
                continue;
            }
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let cost = gini_cost(&left) + gini_cost(&right);
            let lw: f64 = left.iter().sum();
            let balance = lw.min(total_w - lw);
            let better = match best {
                None => true,
                Some((_, _, c, b)) => cost < c - tol || (cost <= c + tol && balance > b),
            };
            if better {
                best = Some((j, midpoint(lo, hi), cost, balance));
            }
        }
    }
    best.map(|(j, t, _, _)| (j, t))
}

/// Top-down Gini tree.
fn grow_greedy(data: &TrainData, idx: &[usize], depth_left: usize, min_leaf: usize) -> Node {
    if depth_left == 0 || idx.len() < 2 * min_leaf || is_pure(data, idx) {
        return Node::leaf(data.counts(idx));
    }
    let features: Vec<usize> = (0..data.p).collect();
    let Some((j, thr)) = best_gini_split(data, idx, &features, min_leaf) else {
        return Node::leaf(data.counts(idx));
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.cols[j][i] < thr);
    Node::branch(
        Split::axis(j, thr),
        grow_greedy(data, &l, depth_left - 1, min_leaf),
        grow_greedy(data, &r, depth_left - 1, min_leaf),
    )
}

/// Randomized top-down tree: each node splits a random feature at a random
/// midpoint that leaves `min_leaf` points on either side.
fn grow_random(data: &TrainData, idx: &[usize], depth_left: usize, min_leaf: usize, rng: &mut ChaCha8Rng) -> Node {
    if depth_left == 0 || idx.len() < 2 * min_leaf {
        return Node::leaf(data.counts(idx));
    }
    let j = rng.random_range(0..data.p);
    let mut v: Vec<f64> = idx.iter().map(|&i| data.cols[j][i]).collect();
    v.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (min_leaf..=v.len() - min_leaf)
        .filter(|&c| v[c - 1] < v[c])
        .map(|c| midpoint(v[c - 1], v[c]))
        .collect();
    if cuts.is_empty() {
        return Node::leaf(data.counts(idx));
    }
    let thr = cuts[rng.random_range(0..cuts.len())];
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.cols[j][i] < thr);
    let left = grow_random(data, &l, depth_left - 1, min_leaf, rng);
    let right = grow_random(data, &r, depth_left - 1, min_leaf, rng);
    Node::branch(Split::axis(j, thr), left, right)
}

fn all_points(data: &TrainData) -> Vec<usize> {
    (0..data.n).collect()
}

/// Refits leaf counts to the training data and wraps the root as a tree.
fn finish(root: Node, data: &TrainData, cfg: &TrainConfig) -> Tree {
    fn refit(node: &Node, data: &TrainData, idx: &[usize]) -> Node {
        match node {
            Node::Leaf { .. } => Node::leaf(data.counts(idx)),
            Node::Branch { split, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| split.goes_left(data.row(i)));
                Node::branch(split.clone(), refit(left, data, &l), refit(right, data, &r))
            }
        }
    }
    let root = refit(&root, data, &all_points(data));
    Tree {
        root,
        classes: data.classes.clone(),
        feature_names: data.feature_names.clone(),
        target: data.target,
        tie_break: cfg.tie_break,
        config_hash: cfg.hash(),
    }
}

/// Gini-greedy axis-aligned tree respecting depth and minimum leaf size.
pub fn greedy_init(data: &TrainData, cfg: &TrainConfig) -> Result<Tree> {
    cfg.validate()?;
    let root = grow_greedy(data, &all_points(data), cfg.max_depth, cfg.min_leaf);
    Ok(finish(root, data, cfg))
}

// ---------------------------------------------------------------------------
// local search

fn node_at<'a>(root: &'a Node, path: &[bool]) -> Option<&'a Node> {
    let mut node = root;
    for &right in path {
        match node {
            Node::Branch { left, right: r, .. } => node = if right { r } else { left },
            Node::Leaf { .. } => return None,
        }
    }
    Some(node)
}

fn node_at_mut<'a>(root: &'a mut Node, path: &[bool]) -> &'a mut Node {
    let mut node = root;
    for &right in path {
        match node {
            Node::Branch { left, right: r, .. } => node = if right { r } else { left },
            Node::Leaf { .. } => unreachable!("path checked by node_at"),
        }
    }
    node
}

fn collect_paths(node: &Node, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
    out.push(prefix.clone());
    if let Node::Branch { left, right, .. } = node {
        prefix.push(false);
        collect_paths(left, prefix, out);
        prefix.pop();
        prefix.push(true);
        collect_paths(right, prefix, out);
        prefix.pop();
    }
}

fn reaching(root: &Node, path: &[bool], data: &TrainData) -> Vec<usize> {
    let mut idx = all_points(data);
    let mut node = root;
    for &go_right in path {
        let Node::Branch { split, left, right } = node else { unreachable!() };
        idx.retain(|&i| split.goes_left(data.row(i)) != go_right);
        node = if go_right { right } else { left };
    }
    idx
}

fn full_objective(root: &Node, data: &TrainData, alpha: f64) -> f64 {
    let e = subtree_eval(root, data, &all_points(data), 0);
    Objective::new(e.err, data.total_weight, root.n_splits(), alpha).value
}

fn check_constraints(root: &Node, data: &TrainData, cfg: &TrainConfig) -> Result<()> {
    if root.depth() > cfg.max_depth {
        return Err(Error::Input(format!(
            "initial tree has depth {} above the limit {}",
            root.depth(),
            cfg.max_depth
        )));
    }
    if root.max_sparsity() > cfg.max_split_complexity {
        return Err(Error::Input("initial tree exceeds the split complexity".into()));
    }
    if root.splits().iter().any(|s| s.coefficients.iter().any(|&(j, _)| j >= data.p)) {
        return Err(Error::Input("initial tree uses an unknown feature".into()));
    }
    if !subtree_eval(root, data, &all_points(data), cfg.min_leaf).valid {
        return Err(Error::Input("initial tree has a leaf below the minimum size".into()));
    }
    Ok(())
}

/// Best strictly improving replacement of the subtree at `path`, as
/// `(objective change, new subtree)`.
fn best_move(root: &Node, path: &[bool], data: &TrainData, cfg: &TrainConfig) -> Option<(f64, Node)> {
    let node = node_at(root, path)?;
    let idx = reaching(root, path, data);
    if idx.is_empty() {
        return None;
    }
    let cur = subtree_eval(node, data, &idx, cfg.min_leaf);
    let cur_splits = node.n_splits();
    let mut best: Option<(f64, Node)> = None;
    let consider = |cand: Node, best: &mut Option<(f64, Node)>| {
        let e = subtree_eval(&cand, data, &idx, cfg.min_leaf);
        if !e.valid {
            return;
        }
        let delta = (e.err - cur.err) / data.total_weight + cfg.alpha * (cand.n_splits() as f64 - cur_splits as f64);
        if delta < -IMPROVEMENT_TOL && best.as_ref().is_none_or(|(d, _)| delta < *d) {
            *best = Some((delta, cand));
        }
    };
    match node {
        Node::Branch { split, left, right } => {
            consider(Node::leaf(data.counts(&idx)), &mut best);
            consider((**left).clone(), &mut best);
            consider((**right).clone(), &mut best);
            let (la, nl) = leaf_assign(left, data, &idx);
            let (ra, nr) = leaf_assign(right, data, &idx);
            let ch = Children {
                left: &la,
                n_left: nl,
                right: &ra,
                n_right: nr,
            };
            if let Some((s, _)) = best_axis_split(data, &idx, &ch, cfg.min_leaf) {
                consider(Node::Branch {
                    split: s,
                    left: left.clone(),
                    right: right.clone(),
                }, &mut best);
            }
            if cfg.max_split_complexity > 1 {
                if let Some((s, _)) = improve_hyperplane(data, &idx, split, &ch, cfg.max_split_complexity, cfg.min_leaf) {
                    let (s, swap) = Split::normalized(s.coefficients, s.threshold).expect("descent keeps a coefficient");
                    let (l, r) = if swap { (right.clone(), left.clone()) } else { (left.clone(), right.clone()) };
                    consider(Node::Branch { split: s, left: l, right: r }, &mut best);
                }
            }
        }
        Node::Leaf { .. } => {
            if path.len() >= cfg.max_depth {
                return None;
            }
            let zeros = vec![0u32; idx.len()];
            let ch = Children {
                left: &zeros,
                n_left: 1,
                right: &zeros,
                n_right: 1,
            };
            if let Some((mut s, _)) = best_axis_split(data, &idx, &ch, cfg.min_leaf) {
                if cfg.max_split_complexity > 1 {
                    if let Some((h, _)) = improve_hyperplane(data, &idx, &s, &ch, cfg.max_split_complexity, cfg.min_leaf) {
                        // leaf children are interchangeable, so a sign flip needs no swap
                        s = Split::normalized(h.coefficients, h.threshold).expect("descent keeps a coefficient").0;
                    }
                }
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| s.goes_left(data.row(i)));
                consider(Node::branch(s, Node::leaf(data.counts(&l)), Node::leaf(data.counts(&r))), &mut best);
            }
        }
    }
    best
}

fn search(data: &TrainData, cfg: &TrainConfig, mut root: Node, rng: &mut ChaCha8Rng, trace: &mut Vec<f64>) -> Node {
    let mut current = full_objective(&root, data, cfg.alpha);
    if trace.is_empty() {
        trace.push(current);
    }
    for _ in 0..cfg.max_local_search_passes {
        let mut paths = Vec::new();
        collect_paths(&root, &mut Vec::new(), &mut paths);
        paths.shuffle(rng);
        let mut improved = false;
        for path in paths {
            let Some((_, cand)) = best_move(&root, &path, data, cfg) else { continue };
            let mut next = root.clone();
            *node_at_mut(&mut next, &path) = cand;
            let value = full_objective(&next, data, cfg.alpha);
            if value < current - IMPROVEMENT_TOL {
                root = next;
                current = value;
                trace.push(value);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    root
}

/// Local search from `init`. Returns the improved tree and the objective
/// after every accepted move, starting with the objective of `init`.
pub fn local_search(data: &TrainData, cfg: &TrainConfig, init: &Tree) -> Result<(Tree, Vec<f64>)> {
    cfg.validate()?;
    if init.n_features() != data.p {
        return Err(Error::Input("initial tree and data have different feature counts".into()));
    }
    check_constraints(&init.root, data, cfg)?;
    let mut rng = restart_rng(cfg.seed, 0);
    let mut trace = Vec::new();
    let root = search(data, cfg, init.root.clone(), &mut rng, &mut trace);
    Ok((finish(root, data, cfg), trace))
}

// ---------------------------------------------------------------------------
// restarts

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Greedy,
    Random,
    WarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub start: StartKind,
    /// Objective of the start tree followed by the objective after every accepted move.
    pub trace: Vec<f64>,
    pub final_objective: f64,
    pub n_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub config_hash: String,
    pub restarts: Vec<RestartTrace>,
    pub best_restart: usize,
    pub greedy_objective: f64,
    pub objective: Objective,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tree: Tree,
    pub report: TrainReport,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// Checks the logged search: every accepted move strictly lowered the
    /// objective, and the returned tree is no worse than the greedy start.
    pub fn soundness(&self) -> std::result::Result<(), String> {
        for r in &self.restarts {
            if let Some(w) = r.trace.windows(2).find(|w| w[1] >= w[0]) {
                return Err(format!("restart {}: move from {} to {}", r.restart, w[0], w[1]));
            }
            if r.trace.last() != Some(&r.final_objective) {
                return Err(format!("restart {}: final objective is not the last trace entry", r.restart));
            }
        }
        if self.objective.value > self.greedy_objective + IMPROVEMENT_TOL {
            return Err(format!(
                "final objective {} exceeds greedy objective {}",
                self.objective.value, self.greedy_objective
            ));
        }
        let best = self.restarts.iter().map(|r| r.final_objective).fold(f64::INFINITY, f64::min);
        if (self.objective.value - best).abs() > IMPROVEMENT_TOL {
            return Err(format!("reported objective {} is not the best restart {}", self.objective.value, best));
        }
        Ok(())
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Best tree over restarts: restart 0 starts from the greedy tree, the others
/// from random trees, then one restart per warm-start tree. Each
/// restart runs axis-aligned local search and, when the complexity allows,
/// continues with hyperplane moves from the axis solution.
pub fn train_with(data: &TrainData, cfg: &TrainConfig, warm_starts: &[Tree]) -> Result<TrainOutcome> {
    let clock = Instant::now();
    cfg.validate()?;
    for w in warm_starts {
        if w.n_features() != data.p {
            return Err(Error::Input("warm-start tree and data have different feature counts".into()));
        }
        check_constraints(&w.root, data, cfg)?;
    }
    let all = all_points(data);
    let jobs = cfg.restarts + warm_starts.len();
    let runs: Vec<(Node, RestartTrace)> = (0..jobs)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(cfg.seed, r);
            let (kind, init) = if r == 0 {
                (StartKind::Greedy, grow_greedy(data, &all, cfg.max_depth, cfg.min_leaf))
            } else if r < cfg.restarts {
                (
                    StartKind::Random,
                    grow_random(data, &all, cfg.max_depth, cfg.min_leaf, &mut rng),
                )
            } else {
                (StartKind::WarmStart, warm_starts[r - cfg.restarts].root.clone())
            };
            let mut trace = Vec::new();
            let mut root = search(data, &cfg.axis_only(), init, &mut rng, &mut trace);
            if cfg.max_split_complexity > 1 {
                root = search(data, cfg, root, &mut rng, &mut trace);
            }
            let t = RestartTrace {
                restart: r,
                start: kind,
                final_objective: *trace.last().expect("trace starts with the initial objective"),
                trace,
                n_splits: root.n_splits(),
            };
            (root, t)
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|a, b| {
            a.1.final_objective
                .total_cmp(&b.1.final_objective)
                .then(a.1.n_splits.cmp(&b.1.n_splits))
                .then(a.1.restart.cmp(&b.1.restart))
        })
        .expect("at least one restart");
    let best_restart = best.1.restart;
    let tree = finish(best.0.clone(), data, cfg);
    let obj = objective(&tree, data, cfg.alpha)?;
    let report = TrainReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        greedy_objective: runs[0].1.trace[0],
        restarts: runs.into_iter().map(|(_, t)| t).collect(),
        best_restart,
        objective: obj,
        depth: tree.depth(),
    };
    debug_assert_eq!(report.soundness(), Ok(()));
    Ok(TrainOutcome {
        tree,
        report,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

pub fn train(data: &TrainData, cfg: &TrainConfig) -> Result<Tree> {
    Ok(train_with(data, cfg, &[])?.tree)
}
