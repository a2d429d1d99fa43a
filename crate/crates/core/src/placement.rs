//! Sensor-placement study: trees over the installed gauges against trees over
//! installed plus candidate gauges, on datasets that share their noise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate, split, Dataset, NoiseSpec, Target};
use crate::eval::{report, EvalReport};
use crate::fem::PlateModel;
use crate::layout::SensorLayout;
use crate::learn::{train_with, TrainConfig, TrainData, TrainReport};
use crate::library::{LoadCase, ModelLibrary};
use crate::tree::Tree;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub target: Target,
    pub depths: Vec<usize>,
    pub split_complexity: usize,
    pub s: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub load_factor: f64,
    pub noise: NoiseSpec,
    pub train: TrainConfig,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            target: Target::Mu2,
            depths: vec![3, 4, 5],
            split_complexity: 4,
            s: 100,
            test_fraction: 0.3,
            seed: 0,
            load_factor: 3.0,
            noise: NoiseSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub depth: usize,
    pub fixed: EvalReport,
    pub candidate: EvalReport,
    pub fixed_objective: f64,
    pub candidate_objective: f64,
    /// Installed gauges used by the candidate-layout tree.
    pub selected_installed: Vec<u32>,
    /// Candidate-only gauges used by the candidate-layout tree.
    pub selected_new: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub config: PlacementConfig,
    pub records: Vec<PlacementRecord>,
    #[serde(skip)]
    pub trees: Vec<(Tree, Tree)>,
    /// Training reports of the installed and candidate trees, per depth.
    #[serde(skip)]
    pub train_reports: Vec<(TrainReport, TrainReport)>,
}

/// Rewrites an installed-layout tree onto the candidate layout's features.
/// Both datasets hold the same values in the shared columns, so the embedded
/// tree routes every row exactly as the original.
pub fn embed(tree: &Tree, from: &[u32], to: &[u32]) -> Result<Tree> {
    let map = from
        .iter()
        .map(|id| {
            to.iter()
                .position(|t| t == id)
                .ok_or_else(|| Error::Input(format!("gauge {id} is missing from the target layout")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tree {
        root: tree.root.remap_features(&map),
        feature_names: to.iter().map(|id| format!("gauge_{id}")).collect(),
        ..tree.clone()
    })
}

pub fn placement_study(
    library: &ModelLibrary,
    model: &PlateModel,
    cfg: &PlacementConfig,
) -> Result<PlacementReport> {
    if cfg.depths.is_empty() {
        return Err(Error::Input("placement study needs at least one depth".into()));
    }
    let regions = &model.config().damage_regions;
    let fixed_layout = SensorLayout::installed(regions);
    let cand_layout = SensorLayout::candidate(regions);
    let load = LoadCase::new(cfg.load_factor);
    let gen = |l: &SensorLayout| generate(library, model, l, &load, &cfg.noise, cfg.s, cfg.seed);
    let fixed_ds = gen(&fixed_layout)?;
    let cand_ds = gen(&cand_layout)?;
    let (fixed_train, fixed_test) = split(&fixed_ds, cfg.test_fraction, cfg.seed)?;
    let (cand_train, cand_test) = split(&cand_ds, cfg.test_fraction, cfg.seed)?;
    study_on(&fixed_train, &fixed_test, &cand_train, &cand_test, cfg)
}

/// Runs the per-depth comparison on already generated and split datasets.
pub fn study_on(
    fixed_train: &Dataset,
    fixed_test: &Dataset,
    cand_train: &Dataset,
    cand_test: &Dataset,
    cfg: &PlacementConfig,
) -> Result<PlacementReport> {
    let fixed_data = TrainData::from_dataset(fixed_train, cfg.target)?;
    let cand_data = TrainData::from_dataset(cand_train, cfg.target)?;
    let installed_ids: Vec<u32> = cand_train
        .meta
        .layout
        .gauges
        .iter()
        .filter(|g| g.installed)
        .map(|g| g.id)
        .collect();
    let mut records = Vec::new();
    let mut trees = Vec::new();
    let mut train_reports = Vec::new();
    for &depth in &cfg.depths {
        let tc = TrainConfig {
            max_depth: depth,
            max_split_complexity: cfg.split_complexity,
            ..cfg.train.clone()
        };
        let fixed = train_with(&fixed_data, &tc, &[])?;
        let warm = embed(&fixed.tree, &fixed_train.gauge_ids, &cand_train.gauge_ids)?;
        let cand = train_with(&cand_data, &tc, &[warm])?;
        let fixed_rep = report(&fixed.tree, fixed_train, Some(fixed_test), cfg.target)?;
        let cand_rep = report(&cand.tree, cand_train, Some(cand_test), cfg.target)?;
        let (selected_installed, selected_new) =
            cand_rep.used_gauges.iter().partition(|id| installed_ids.contains(id));
        records.push(PlacementRecord {
            depth,
            fixed_objective: fixed.report.objective.value,
            candidate_objective: cand.report.objective.value,
            fixed: fixed_rep,
            candidate: cand_rep,
            selected_installed,
            selected_new,
        });
        trees.push((fixed.tree, cand.tree));
        train_reports.push((fixed.report, cand.report));
    }
    Ok(PlacementReport {
        config: cfg.clone(),
        records,
        trees,
        train_reports,
    })
}

fn ids(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

impl PlacementReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "depth,fixed_mae_train,fixed_mae_test,candidate_mae_train,candidate_mae_test,fixed_objective,candidate_objective,fixed_gauges,selected_installed,selected_new\n",
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.depth,
                r.fixed.train.mae,
                r.fixed.test.map_or(f64::NAN, |t| t.mae),
                r.candidate.train.mae,
                r.candidate.test.map_or(f64::NAN, |t| t.mae),
                r.fixed_objective,
                r.candidate_objective,
                ids(&r.fixed.used_gauges),
                ids(&r.selected_installed),
                ids(&r.selected_new)
            );
        }
        s
    }
}
