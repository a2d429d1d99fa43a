//! Held-out metrics and depth × split-complexity sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Target};
use crate::learn::{train_with, TrainConfig, TrainData, TrainReport};
use crate::tree::Tree;
use crate::{Error, Result};

/// Metrics of one tree on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Mean absolute error in percent stiffness reduction.
    pub mae: f64,
    /// Fraction of rows whose predicted class differs from the true one.
    pub misclassification: f64,
    pub n_misclassified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Target,
    pub depth: usize,
    pub n_splits: usize,
    /// Largest number of features in any split of the tree.
    pub split_complexity: usize,
    pub used_gauges: Vec<u32>,
    pub train: Metrics,
    pub test: Option<Metrics>,
}

/// Percent values `(mu1, mu2)` of a library label on a square grid.
fn label_params(label: usize, grid: &[f64]) -> [f64; 2] {
    let g = grid.len();
    [grid[label / g], grid[label % g]]
}

fn check_compatible(tree: &Tree, ds: &Dataset, target: Target) -> Result<()> {
    if let Some(t) = tree.target {
        if t != target {
            return Err(Error::Input(format!("tree predicts {t}, evaluation asked for {target}")));
        }
    }
    let names: Vec<String> = ds.gauge_ids.iter().map(|id| format!("gauge_{id}")).collect();
    if names != tree.feature_names {
        return Err(Error::Input(format!(
            "tree uses {} features that do not match the dataset's {} gauges",
            tree.n_features(),
            ds.p()
        )));
    }
    Ok(())
}

/// MAE and misclassification of `tree` on `ds` for the given parameter.
/// For the scenario target the error of a row is the mean of both parameter errors.
pub fn evaluate(tree: &Tree, ds: &Dataset, target: Target) -> Result<Metrics> {
    check_compatible(tree, ds, target)?;
    let (y, classes) = ds.classes(target)?;
    if classes.len() > tree.classes.len() || classes.iter().zip(&tree.classes).any(|(a, b)| a != b) {
        return Err(Error::Input("dataset classes are not the tree's classes".into()));
    }
    let grid = &ds.meta.grid_values;
    let mut abs = 0.0;
    let mut wrong = 0;
    for i in 0..ds.n() {
        let c = tree.classify(ds.row(i))?;
        if c != y[i] {
            wrong += 1;
        }
        abs += match target {
            Target::Mu1 => (tree.classes[c] - ds.targets[i][0]).abs(),
            Target::Mu2 => (tree.classes[c] - ds.targets[i][1]).abs(),
            Target::Scenario => {
                let p = label_params(c, grid);
                0.5 * ((p[0] - ds.targets[i][0]).abs() + (p[1] - ds.targets[i][1]).abs())
            }
        };
    }
    let n = ds.n();
    Ok(Metrics {
        n,
        mae: if n == 0 { 0.0 } else { abs / n as f64 },
        misclassification: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
        n_misclassified: wrong,
    })
}

pub fn report(tree: &Tree, train: &Dataset, test: Option<&Dataset>, target: Target) -> Result<EvalReport> {
    let used: Vec<u32> = tree.used_gauge_ids();
    Ok(EvalReport {
        target,
        depth: tree.depth(),
        n_splits: tree.n_splits(),
        split_complexity: tree.root.max_sparsity(),
        used_gauges: used,
        train: evaluate(tree, train, target)?,
        test: test.map(|t| evaluate(tree, t, target)).transpose()?,
    })
}

/// Library-label prediction from the two parameter trees.
pub fn compose(mu1_tree: &Tree, mu2_tree: &Tree, x: &[f64]) -> Result<(f64, f64, Option<usize>)> {
    let a = mu1_tree.predict_value(x)?;
    let b = mu2_tree.predict_value(x)?;
    let grid = &mu1_tree.classes;
    let label = match (grid.iter().position(|&v| v == a), mu2_tree.classes.iter().position(|&v| v == b)) {
        (Some(i), Some(j)) if mu2_tree.classes.len() == grid.len() => Some(i * grid.len() + j),
        _ => None,
    };
    Ok((a, b, label))
}

/// Split-complexity budget of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Limit(usize),
    Unlimited,
}

impl Complexity {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            Complexity::Limit(k) => k,
            Complexity::Unlimited => p.max(1),
        }
    }
}

impl std::fmt::Display for Complexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Complexity::Limit(k) => write!(f, "{k}"),
            Complexity::Unlimited => f.write_str("unlimited"),
        }
    }
}

impl std::str::FromStr for Complexity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "unlimited" {
            return Ok(Complexity::Unlimited);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Complexity::Limit(k)),
            _ => Err(Error::Parse(format!("split complexity `{s}` must be a positive integer or `unlimited`"))),
        }
    }
}

pub const DEFAULT_DEPTHS: [usize; 4] = [3, 4, 5, 6];
pub const DEFAULT_COMPLEXITIES: [Complexity; 4] =
    [Complexity::Limit(1), Complexity::Limit(2), Complexity::Limit(4), Complexity::Unlimited];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub depth: usize,
    pub complexity: Complexity,
    pub objective: f64,
    pub report: EvalReport,
    /// Lowest test MAE among the cells with this complexity.
    pub best_test_depth: bool,
    #[serde(skip)]
    pub tree: Option<Tree>,
    #[serde(skip)]
    pub train_report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub target: Target,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, depth: usize, complexity: Complexity) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.depth == depth && c.complexity == complexity)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "depth,complexity,mae_train,mae_test,misclass_train,misclass_test,n_features_used,n_splits,objective,best_test_depth\n",
        );
        for c in &self.cells {
            let r = &c.report;
            let (mt, xt) = r.test.map_or((f64::NAN, f64::NAN), |t| (t.mae, t.misclassification));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.depth,
                c.complexity,
                r.train.mae,
                mt,
                r.train.misclassification,
                xt,
                r.used_gauges.len(),
                r.n_splits,
                c.objective,
                c.best_test_depth
            );
        }
        s
    }

    /// Text chart of MAE against depth, one line of bars per complexity.
    pub fn chart(&self, test: bool) -> String {
        let mut out = String::new();
        let max = self
            .cells
            .iter()
            .filter_map(|c| if test { c.report.test.map(|t| t.mae) } else { Some(c.report.train.mae) })
            .fold(0.0_f64, f64::max)
            .max(1e-9);
        let _ = writeln!(out, "{} MAE by depth ({})", if test { "test" } else { "training" }, self.target);
        let mut complexities: Vec<Complexity> = self.cells.iter().map(|c| c.complexity).collect();
        complexities.dedup();
        for cx in complexities {
            let _ = writeln!(out, "complexity {cx}");
            for c in self.cells.iter().filter(|c| c.complexity == cx) {
                let v = if test { c.report.test.map_or(0.0, |t| t.mae) } else { c.report.train.mae };
                let bar = "#".repeat((40.0 * v / max).round() as usize);
                let _ = writeln!(out, "  depth {:>2} {:>8.3} {bar}", c.depth, v);
            }
        }
        out
    }
}

/// Trains one tree per (depth, complexity) cell. Cells are visited in
/// ascending complexity then depth, and each cell warm-starts from the trees
/// of the previous depth and the previous complexity, so the training
/// objective never increases along either axis.
pub fn sweep(
    train: &Dataset,
    test: &Dataset,
    target: Target,
    depths: &[usize],
    complexities: &[Complexity],
    cfg: &TrainConfig,
) -> Result<SweepReport> {
    if depths.is_empty() || complexities.is_empty() {
        return Err(Error::Input("sweep needs at least one depth and one complexity".into()));
    }
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let mut complexities = complexities.to_vec();
    complexities.sort();
    complexities.dedup();
    let data = TrainData::from_dataset(train, target)?;
    let mut cells: Vec<SweepCell> = Vec::new();
    for (ci, &cx) in complexities.iter().enumerate() {
        for (di, &depth) in depths.iter().enumerate() {
            let cell_cfg = TrainConfig {
                max_depth: depth,
                max_split_complexity: cx.resolve(data.p()),
                ..cfg.clone()
            };
            let mut warm = Vec::new();
            if di > 0 {
                warm.extend(cells.last().and_then(|c| c.tree.clone()));
            }
            if ci > 0 {
                let prev = complexities[ci - 1];
                warm.extend(cells.iter().find(|c| c.depth == depth && c.complexity == prev).and_then(|c| c.tree.clone()));
            }
            let out = train_with(&data, &cell_cfg, &warm)
                .map_err(|e| Error::Input(format!("sweep cell depth {depth}, complexity {cx}: {e}")))?;
            let rep = report(&out.tree, train, Some(test), target)?;
            cells.push(SweepCell {
                depth,
                complexity: cx,
                objective: out.report.objective.value,
                report: rep,
                best_test_depth: false,
                tree: Some(out.tree),
                train_report: Some(out.report),
            });
        }
    }
    for &cx in &complexities {
        let best = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.complexity == cx)
            .min_by(|a, b| {
                let ta = a.1.report.test.map_or(f64::INFINITY, |t| t.mae);
                let tb = b.1.report.test.map_or(f64::INFINITY, |t| t.mae);
                ta.total_cmp(&tb).then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            cells[i].best_test_depth = true;
        }
    }
    Ok(SweepReport { target, cells })
}
