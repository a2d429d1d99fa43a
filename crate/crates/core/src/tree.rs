//! Classification trees with axis-aligned or hyperplane splits.
//!
//! A branch sends `x` left when `a·x < b` and right when `a·x ≥ b`. Leaves keep
//! the (weighted) class counts of the training points that reached them, so
//! every prediction carries its leaf distribution.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Target;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Nonzero coefficients as `(feature index, coefficient)`, sorted by feature.
    pub coefficients: Vec<(usize, f64)>,
    pub threshold: f64,
}

impl Split {
    pub fn axis(feature: usize, threshold: f64) -> Self {
        Self {
            coefficients: vec![(feature, 1.0)],
            threshold,
        }
    }

    /// Builds a split from raw coefficients, dropping zeros and sorting by
    /// feature. Returns `None` if every coefficient is zero. A single remaining
    /// coefficient is rescaled to 1; the flag reports whether a negative scale
    /// flipped the sides, in which case the caller swaps the children.
    pub fn normalized(mut coefficients: Vec<(usize, f64)>, threshold: f64) -> Option<(Self, bool)> {
        coefficients.retain(|&(_, c)| c != 0.0);
        coefficients.sort_by_key(|&(j, _)| j);
        match coefficients.len() {
            0 => None,
            1 => {
                let (j, c) = coefficients[0];
                Some((Self::axis(j, threshold / c), c < 0.0))
            }
            _ => Some((Self { coefficients, threshold }, false)),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(j, c)| c * x[j]).sum()
    }

    pub fn goes_left(&self, x: &[f64]) -> bool {
        self.value(x) < self.threshold
    }

    pub fn sparsity(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_axis(&self) -> bool {
        self.coefficients.len() == 1
    }

    pub fn describe(&self, names: &[String]) -> String {
        let name = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1));
        if self.is_axis() && self.coefficients[0].1 == 1.0 {
            return format!("{} < {}", name(self.coefficients[0].0), self.threshold);
        }
        let mut s = String::new();
        for (k, &(j, c)) in self.coefficients.iter().enumerate() {
            if k == 0 {
                s.push_str(&format!("{c}*{}", name(j)));
            } else if c < 0.0 {
                s.push_str(&format!(" - {}*{}", -c, name(j)));
            } else {
                s.push_str(&format!(" + {c}*{}", name(j)));
            }
        }
        format!("{s} < {}", self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Branch {
        split: Split,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        counts: Vec<f64>,
    },
}

impl Node {
    pub fn leaf(counts: Vec<f64>) -> Self {
        Node::Leaf { counts }
    }

    pub fn branch(split: Split, left: Node, right: Node) -> Self {
        Node::Branch {
            split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_splits(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.n_splits() + right.n_splits(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Branch { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn max_sparsity(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { split, left, right } => {
                split.sparsity().max(left.max_sparsity()).max(right.max_sparsity())
            }
        }
    }

    /// Leaf reached by `x`, with the index of that leaf in depth-first order.
    pub fn route(&self, x: &[f64]) -> (&Node, usize) {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                Node::Leaf { .. } => return (node, offset),
                Node::Branch { split, left, right } => {
                    if split.goes_left(x) {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn splits(&self) -> Vec<&Split> {
        let mut out = Vec::new();
        self.collect_splits(&mut out);
        out
    }

    fn collect_splits<'a>(&'a self, out: &mut Vec<&'a Split>) {
        if let Node::Branch { split, left, right } = self {
            out.push(split);
            left.collect_splits(out);
            right.collect_splits(out);
        }
    }

    pub fn leaves(&self) -> Vec<&Vec<f64>> {
        match self {
            Node::Leaf { counts } => vec![counts],
            Node::Branch { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    /// Rewrites feature indices through `map` (old index → new index).
    pub fn remap_features(&self, map: &[usize]) -> Node {
        match self {
            Node::Leaf { counts } => Node::Leaf { counts: counts.clone() },
            Node::Branch { split, left, right } => Node::branch(
                Split {
                    coefficients: split.coefficients.iter().map(|&(j, c)| (map[j], c)).collect(),
                    threshold: split.threshold,
                },
                left.remap_features(map),
                right.remap_features(map),
            ),
        }
    }
}

/// How `argmax` resolves equal leaf probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    /// Prefers the class listed last (the most damaged level on a percent grid).
    HighestIndex,
}

/// Normalized leaf class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDistribution {
    pub probabilities: Vec<f64>,
}

impl LeafDistribution {
    pub fn from_counts(counts: &[f64]) -> Self {
        let total: f64 = counts.iter().sum();
        let probabilities = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / counts.len() as f64; counts.len()]
        };
        Self { probabilities }
    }

    pub fn argmax(&self, tie: TieBreak) -> usize {
        let mut best = 0;
        for (k, &p) in self.probabilities.iter().enumerate() {
            let better = match tie {
                TieBreak::LowestIndex => p > self.probabilities[best],
                TieBreak::HighestIndex => p >= self.probabilities[best],
            };
            if better {
                best = k;
            }
        }
        best
    }
}

/// Which way a point went at a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub split: String,
    /// Value of `a·x` at this branch.
    pub observed: f64,
    pub branch: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub steps: Vec<PathStep>,
    pub leaf: LeafDistribution,
    pub predicted: usize,
    pub predicted_value: f64,
}

impl std::fmt::Display for Explanation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.steps {
            let arrow = match s.branch {
                Side::Left => "true -> left",
                Side::Right => "false -> right",
            };
            writeln!(f, "{}  (observed {:.4}): {arrow}", s.split, s.observed)?;
        }
        let probs: Vec<String> = self.leaf.probabilities.iter().map(|p| format!("{p:.4}")).collect();
        write!(
            f,
            "leaf: class {} (value {}), distribution [{}]",
            self.predicted,
            self.predicted_value,
            probs.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
    /// Numeric value represented by each class (percent reduction or library label).
    pub classes: Vec<f64>,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub target: Option<Target>,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// SHA-256 of the training configuration, empty for hand-built trees.
    #[serde(default)]
    pub config_hash: String,
}

impl Tree {
    pub fn new(root: Node, classes: Vec<f64>, feature_names: Vec<String>) -> Self {
        Self {
            root,
            classes,
            feature_names,
            target: None,
            tie_break: TieBreak::default(),
            config_hash: String::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Number of branch nodes; the complexity term of the objective.
    pub fn n_splits(&self) -> usize {
        self.root.n_splits()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Input(format!(
                "feature vector has {} entries, tree expects {}",
                x.len(),
                self.n_features()
            )));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature {} is not finite", j + 1)));
        }
        Ok(())
    }

    fn leaf_counts(&self, x: &[f64]) -> &[f64] {
        match self.root.route(x).0 {
            Node::Leaf { counts } => counts,
            Node::Branch { .. } => unreachable!("route ends at a leaf"),
        }
    }

    pub fn classify_proba(&self, x: &[f64]) -> Result<LeafDistribution> {
        self.check_input(x)?;
        Ok(LeafDistribution::from_counts(self.leaf_counts(x)))
    }

    /// Class index of the routed leaf's most probable label.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classify_proba(x)?.argmax(self.tie_break))
    }

    /// Numeric value of the predicted class.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.classes[self.classify(x)?])
    }

    pub fn explain(&self, x: &[f64]) -> Result<Explanation> {
        self.check_input(x)?;
        let mut steps = Vec::new();
        let mut node = &self.root;
        let counts = loop {
            match node {
                Node::Leaf { counts } => break counts,
                Node::Branch { split, left, right } => {
                    let observed = split.value(x);
                    let branch = if observed < split.threshold { Side::Left } else { Side::Right };
                    steps.push(PathStep {
                        split: split.describe(&self.feature_names),
                        observed,
                        branch,
                    });
                    node = if branch == Side::Left { left } else { right };
                }
            }
        };
        let leaf = LeafDistribution::from_counts(counts);
        let predicted = leaf.argmax(self.tie_break);
        Ok(Explanation {
            steps,
            predicted_value: self.classes[predicted],
            predicted,
            leaf,
        })
    }

    /// Feature indices with a nonzero coefficient in any split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.root
            .splits()
            .into_iter()
            .flat_map(|s| s.coefficients.iter().map(|&(j, _)| j))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Tree = serde_json::from_str(text)?;
        for s in t.root.splits() {
            if s.coefficients.is_empty() || s.coefficients.iter().any(|&(j, _)| j >= t.n_features()) {
                return Err(Error::Input("tree split references an unknown feature".into()));
            }
        }
        if t.root.leaves().iter().any(|c| c.len() != t.classes.len()) {
            return Err(Error::Input("leaf counts disagree with the class list".into()));
        }
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Gauge ids of the used features, for trees over `gauge_<id>` columns.
    pub fn used_gauge_ids(&self) -> Vec<u32> {
        self.used_features()
            .into_iter()
            .filter_map(|j| self.feature_names[j].strip_prefix("gauge_")?.parse().ok())
            .collect()
    }
}
