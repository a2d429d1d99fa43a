use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use octwin::datagen::{generate, meta_path, split, Dataset, NoiseSpec, Target};
use octwin::eval::{report, sweep, Complexity};
use octwin::fem::{PlateConfig, PlateModel};
use octwin::layout::{LayoutKind, SensorLayout};
use octwin::learn::{train_with, TrainConfig, TrainData};
use octwin::library::{LoadCase, ModelLibrary};
use octwin::placement::{placement_study, PlacementConfig};
use octwin::tree::Tree;
use octwin::twin::{render_frame, run_mission, MissionConfig, TwinTrees};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSettings {
    pub levels: Vec<f64>,
    pub layout: LayoutKind,
    pub s: usize,
    pub variance: f64,
    pub seed: u64,
    pub load_factor: f64,
    pub test_fraction: f64,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self {
            levels: octwin::library::DEFAULT_LEVELS.to_vec(),
            layout: LayoutKind::Installed,
            s: 100,
            variance: NoiseSpec::default().variance,
            seed: 0,
            load_factor: 3.0,
            test_fraction: 0.3,
        }
    }
}

/// A fully resolved command. Serialized into the manifest, so replaying it
/// needs nothing but the recorded input files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Generate {
        plate: PlateConfig,
        settings: GenerateSettings,
    },
    Train {
        dataset: PathBuf,
        target: Target,
        split_complexity: Complexity,
        config: TrainConfig,
    },
    Eval {
        tree: PathBuf,
        dataset: PathBuf,
        target: Option<Target>,
    },
    Sweep {
        dataset: PathBuf,
        test_dataset: PathBuf,
        target: Target,
        depths: Vec<usize>,
        complexities: Vec<Complexity>,
        config: TrainConfig,
    },
    Sensors {
        plate: PlateConfig,
        levels: Vec<f64>,
        placement: PlacementConfig,
    },
    Simulate {
        plate: PlateConfig,
        layout: LayoutKind,
        tree_mu1: PathBuf,
        tree_mu2: PathBuf,
        mission: MissionConfig,
    },
    Explain {
        tree: PathBuf,
        dataset: PathBuf,
        row: usize,
    },
}

/// Named files produced by a job, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub volatile: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

impl Artifacts {
    fn add(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, serde_json::to_string_pretty(value)? + "\n");
        Ok(())
    }

    fn add_dataset(&mut self, name: &str, ds: &Dataset) -> Result<()> {
        self.add(name, ds.to_csv());
        self.add_json(&format!("{name}.meta.json"), &ds.meta)
    }
}

fn dataset_inputs(path: &Path) -> [PathBuf; 2] {
    [path.to_path_buf(), meta_path(path)]
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn read_tree(path: &Path) -> Result<Tree> {
    Tree::read(path).with_context(|| format!("loading tree {}", path.display()))
}

fn check_features(tree: &Tree, ds: &Dataset) -> Result<()> {
    let names: Vec<String> = ds.gauge_ids.iter().map(|id| format!("gauge_{id}")).collect();
    if tree.feature_names != names {
        bail!(
            "tree reads {} features ({}...) but the dataset has {} ({}...)",
            tree.feature_names.len(),
            tree.feature_names.first().map_or("", String::as_str),
            names.len(),
            names.first().map_or("", String::as_str)
        );
    }
    Ok(())
}

impl Job {
    pub fn input_paths(&self) -> Vec<PathBuf> {
        match self {
            Job::Generate { .. } | Job::Sensors { .. } => vec![],
            Job::Train { dataset, .. } => dataset_inputs(dataset).to_vec(),
            Job::Eval { tree, dataset, .. } | Job::Explain { tree, dataset, .. } => {
                let mut v = vec![tree.clone()];
                v.extend(dataset_inputs(dataset));
                v
            }
            Job::Sweep {
                dataset, test_dataset, ..
            } => dataset_inputs(dataset).into_iter().chain(dataset_inputs(test_dataset)).collect(),
            Job::Simulate { tree_mu1, tree_mu2, .. } => vec![tree_mu1.clone(), tree_mu2.clone()],
        }
    }

    pub fn execute(&self) -> Result<Artifacts> {
        let mut a = Artifacts::default();
        match self {
            Job::Generate { plate, settings } => {
                let model = PlateModel::new(plate.clone())?;
                let library = ModelLibrary::build(&settings.levels)?;
                let layout = SensorLayout::of_kind(settings.layout, &plate.damage_regions);
                let noise = NoiseSpec::new(settings.variance)?;
                let load = LoadCase::new(settings.load_factor);
                let ds = generate(&library, &model, &layout, &load, &noise, settings.s, settings.seed)?;
                a.add_dataset("dataset.csv", &ds)?;
                a.add("layout.csv", layout.to_csv());
                // A stratified split needs two rows per model.
                if settings.s >= 2 && settings.test_fraction > 0.0 {
                    let (train, test) = split(&ds, settings.test_fraction, settings.seed)?;
                    a.add_dataset("train.csv", &train)?;
                    a.add_dataset("test.csv", &test)?;
                    a.stdout = format!(
                        "{} rows ({} train, {} test) over {} gauges\n",
                        ds.n(),
                        train.n(),
                        test.n(),
                        ds.p()
                    );
                } else {
                    a.stdout = format!("{} rows over {} gauges, not split\n", ds.n(), ds.p());
                }
            }
            Job::Train {
                dataset,
                target,
                split_complexity,
                config,
            } => {
                let ds = read_dataset(dataset)?;
                let data = TrainData::from_dataset(&ds, *target)?;
                let cfg = TrainConfig {
                    max_split_complexity: split_complexity.resolve(data.p()),
                    ..config.clone()
                };
                let outcome = train_with(&data, &cfg, &[])?;
                let rep = report(&outcome.tree, &ds, None, *target)?;
                a.add("tree.json", outcome.tree.to_json()?);
                a.add_json("train_report.json", &outcome.report)?;
                a.add_json("eval_train.json", &rep)?;
                let timing = serde_json::json!({ "wall_seconds": outcome.wall_seconds });
                a.volatile
                    .push(("timing.json".into(), (serde_json::to_string_pretty(&timing)? + "\n").into_bytes()));
                a.stdout = format!(
                    "objective {:.6} ({} splits, depth {}), training MAE {:.3}, misclassification {:.4}\n",
                    outcome.report.objective.value,
                    outcome.report.objective.n_splits,
                    outcome.report.depth,
                    rep.train.mae,
                    rep.train.misclassification
                );
            }
            Job::Eval { tree, dataset, target } => {
                let t = read_tree(tree)?;
                let ds = read_dataset(dataset)?;
                check_features(&t, &ds)?;
                let target = match (target, t.target) {
                    (Some(want), Some(got)) if *want != got => {
                        bail!("tree was trained for {got}, not {want}")
                    }
                    (Some(want), _) => *want,
                    (None, Some(got)) => got,
                    (None, None) => bail!("the tree does not record its target; pass --target"),
                };
                let rep = report(&t, &ds, None, target)?;
                a.add_json("eval.json", &rep)?;
                a.stdout = format!(
                    "{target}: MAE {:.3}, misclassification {:.4} ({} of {})\n",
                    rep.train.mae, rep.train.misclassification, rep.train.n_misclassified, rep.train.n
                );
            }
            Job::Sweep {
                dataset,
                test_dataset,
                target,
                depths,
                complexities,
                config,
            } => {
                let train = read_dataset(dataset)?;
                let test = read_dataset(test_dataset)?;
                if train.gauge_ids != test.gauge_ids {
                    bail!("training and test datasets read different gauges");
                }
                let r = sweep(&train, &test, *target, depths, complexities, config)?;
                a.add("sweep.csv", r.to_csv());
                a.add_json("sweep.json", &r)?;
                a.add("sweep_chart.txt", format!("training MAE\n{}\ntest MAE\n{}", r.chart(false), r.chart(true)));
                for c in &r.cells {
                    if let Some(t) = &c.tree {
                        a.add(&format!("trees/d{}_c{}.json", c.depth, c.complexity), t.to_json()?);
                    }
                }
                a.stdout = r.to_csv();
            }
            Job::Sensors {
                plate,
                levels,
                placement,
            } => {
                let model = PlateModel::new(plate.clone())?;
                let library = ModelLibrary::build(levels)?;
                let r = placement_study(&library, &model, placement)?;
                let candidate = SensorLayout::candidate(&plate.damage_regions);
                let mut maps = String::new();
                for (rec, (fixed, cand)) in r.records.iter().zip(&r.trees) {
                    let _ = writeln!(maps, "depth {}: installed-layout tree", rec.depth);
                    maps.push_str(&candidate.render_map(&plate.damage_regions, &rec.fixed.used_gauges, 64, 16));
                    let _ = writeln!(maps, "depth {}: candidate-layout tree", rec.depth);
                    maps.push_str(&candidate.render_map(&plate.damage_regions, &rec.candidate.used_gauges, 64, 16));
                    maps.push('\n');
                    a.add(&format!("trees/installed_d{}.json", rec.depth), fixed.to_json()?);
                    a.add(&format!("trees/candidate_d{}.json", rec.depth), cand.to_json()?);
                }
                a.add("placement.csv", r.to_csv());
                a.add_json("placement.json", &r)?;
                a.add("sensor_maps.txt", maps);
                a.stdout = r.to_csv();
            }
            Job::Simulate {
                plate,
                layout,
                tree_mu1,
                tree_mu2,
                mission,
            } => {
                let trees = TwinTrees {
                    mu1: read_tree(tree_mu1)?,
                    mu2: read_tree(tree_mu2)?,
                };
                let layout = SensorLayout::of_kind(*layout, &plate.damage_regions);
                trees.check(&layout)?;
                let model = PlateModel::new(plate.clone())?;
                let log = run_mission(mission, &trees, &model, &layout)?;
                let summary = log.summary(mission);
                let mut frames = String::new();
                for r in &log.records {
                    let e = trees.mu1.explain(&r.features)?;
                    frames.push_str(&render_frame(r, mission, &e));
                    frames.push('\n');
                }
                a.add("mission_log.csv", log.to_csv());
                a.add_json("mission_summary.json", &summary)?;
                a.add("frames.txt", frames);
                a.stdout = format!(
                    "switch step {}, obstacles: {}\n",
                    summary.switch_step.map_or("none".into(), |s| s.to_string()),
                    summary
                        .obstacles
                        .iter()
                        .map(|o| format!("{}:{}", o.step, o.path))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
            Job::Explain { tree, dataset, row } => {
                let t = read_tree(tree)?;
                let ds = read_dataset(dataset)?;
                check_features(&t, &ds)?;
                if *row >= ds.n() {
                    bail!("row {row} is out of range for a dataset of {} rows", ds.n());
                }
                let e = t.explain(ds.row(*row))?;
                let mut text = format!(
                    "row {row}: true mu1 {} mu2 {} (scenario {})\n",
                    ds.targets[*row][0], ds.targets[*row][1], ds.labels[*row]
                );
                let _ = writeln!(text, "{e}");
                a.add("explain.txt", text.clone());
                a.add_json("explain.json", &e)?;
                a.stdout = text;
            }
        }
        Ok(a)
    }
}
