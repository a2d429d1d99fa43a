//! Online digital twin and mission simulator.
//!
//! Every timestep the structure degrades a little, the gauges report noisy
//! strain at the load factor currently being flown, and the two parameter
//! trees pick the library model that best explains the reading. Once either
//! estimated stiffness reduction reaches the failure threshold the aircraft
//! stops flying 3g manoeuvres for the rest of the mission.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{load_normalize, noise_vector, NoiseSpec, Target};
use crate::fem::PlateModel;
use crate::layout::SensorLayout;
use crate::library::{predict_strain, DamageScenario, LoadCase};
use crate::tree::{Explanation, LeafDistribution, Tree};
use crate::{Error, Result};

/// The two parameter classifiers.
#[derive(Debug, Clone)]
pub struct TwinTrees {
    pub mu1: Tree,
    pub mu2: Tree,
}

impl TwinTrees {
    /// Checks that both trees read the usable gauges of `layout` in order.
    pub fn check(&self, layout: &SensorLayout) -> Result<()> {
        let names: Vec<String> = layout.usable_ids().iter().map(|id| format!("gauge_{id}")).collect();
        for (t, want) in [(&self.mu1, Target::Mu1), (&self.mu2, Target::Mu2)] {
            if t.feature_names != names {
                return Err(Error::Input(format!("{want} tree does not read the layout's usable gauges")));
            }
            if let Some(got) = t.target {
                if got != want {
                    return Err(Error::Input(format!("tree for {want} was trained on {got}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub t: usize,
    pub mu1_hat: f64,
    pub mu2_hat: f64,
    /// Library label of `(mu1_hat, mu2_hat)` when both trees share the grid.
    pub label: Option<usize>,
    pub distribution1: LeafDistribution,
    pub distribution2: LeafDistribution,
    /// Largest load factor the twin currently allows.
    pub capability: f64,
    pub latched: bool,
}

impl TwinState {
    pub fn initial(cfg: &MissionConfig, n_classes: usize) -> Self {
        let uniform = LeafDistribution::from_counts(&vec![1.0; n_classes]);
        Self {
            t: 0,
            mu1_hat: 0.0,
            mu2_hat: 0.0,
            label: None,
            distribution1: uniform.clone(),
            distribution2: uniform,
            capability: cfg.l_aggressive,
            latched: false,
        }
    }
}

/// True stiffness reductions over the mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    /// `mu(t) = start + (end - start) · t / (n_steps - 1)` in both regions.
    Linear { start: [f64; 2], end: [f64; 2] },
    /// Explicit per-step values.
    Table { values: Vec<[f64; 2]> },
}

impl Schedule {
    pub fn at(&self, t: usize, n_steps: usize) -> Result<DamageScenario> {
        match self {
            Schedule::Linear { start, end } => {
                let f = if n_steps > 1 { t as f64 / (n_steps - 1) as f64 } else { 0.0 };
                DamageScenario::new(start[0] + (end[0] - start[0]) * f, start[1] + (end[1] - start[1]) * f)
            }
            Schedule::Table { values } => {
                let v = values
                    .get(t)
                    .ok_or_else(|| Error::Input(format!("schedule has no entry for step {t}")))?;
                DamageScenario::new(v[0], v[1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub n_steps: usize,
    pub schedule: Schedule,
    /// Percent reduction at which 3g flight is no longer allowed.
    pub threshold: f64,
    /// Steps at which an obstacle is passed.
    pub obstacles: Vec<usize>,
    pub l_aggressive: f64,
    pub l_conservative: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            schedule: Schedule::Linear {
                start: [0.0, 0.0],
                end: [80.0, 80.0],
            },
            threshold: 40.0,
            obstacles: vec![20, 55, 85],
            l_aggressive: 3.0,
            l_conservative: 2.0,
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Input("a mission needs at least one step".into()));
        }
        if let Some(&o) = self.obstacles.iter().find(|&&o| o >= self.n_steps) {
            return Err(Error::Input(format!("obstacle at step {o} lies beyond the mission")));
        }
        if !(self.l_aggressive > 0.0 && self.l_conservative > 0.0) {
            return Err(Error::Domain("load factors must be positive".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Aggressive,
    Conservative,
}

impl Path {
    pub fn for_capability(capability: f64, cfg: &MissionConfig) -> Self {
        if capability >= cfg.l_aggressive {
            Path::Aggressive
        } else {
            Path::Conservative
        }
    }
}

impl std::fmt::Display for Path {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Path::Aggressive => "aggressive",
            Path::Conservative => "conservative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub true_mu1: f64,
    pub true_mu2: f64,
    /// Load factor flown while measuring.
    pub load_factor: f64,
    /// Load-normalized features that were classified.
    pub features: Vec<f64>,
    pub mu1_hat: f64,
    pub mu2_hat: f64,
    pub capability: f64,
    /// Index into the obstacle list of the next obstacle not yet passed.
    pub next_obstacle: Option<usize>,
    /// Path planned around that obstacle; at an encounter step, the path taken.
    pub path: Option<Path>,
    pub encounter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub gauge_ids: Vec<u32>,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleChoice {
    pub step: usize,
    pub path: Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub n_steps: usize,
    pub seed: u64,
    /// First step with capability below the aggressive load factor.
    pub switch_step: Option<usize>,
    pub obstacles: Vec<ObstacleChoice>,
}

/// RNG for the measurement noise at step `t` of a mission.
fn step_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// One twin update: measure at `truth` while flying `load_factor`, classify,
/// and update capability with the one-way latch.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &TwinState,
    truth: &DamageScenario,
    trees: &TwinTrees,
    model: &PlateModel,
    layout: &SensorLayout,
    cfg: &MissionConfig,
    load_factor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TwinState, Vec<f64>)> {
    let eps = predict_strain(model, truth, &LoadCase::new(load_factor), layout)?;
    let v = noise_vector(rng, layout.max_id(), cfg.noise.std_dev());
    let raw: Vec<f64> = eps
        .microstrain
        .iter()
        .zip(&eps.gauge_ids)
        .map(|(e, id)| e + v[*id as usize - 1])
        .collect();
    let x = load_normalize(&raw, load_factor)?;
    let d1 = trees.mu1.classify_proba(&x)?;
    let d2 = trees.mu2.classify_proba(&x)?;
    let mu1_hat = trees.mu1.classes[d1.argmax(trees.mu1.tie_break)];
    let mu2_hat = trees.mu2.classes[d2.argmax(trees.mu2.tie_break)];
    let latched = state.latched || mu1_hat.max(mu2_hat) >= cfg.threshold;
    let label = match (
        trees.mu1.classes.iter().position(|&c| c == mu1_hat),
        trees.mu2.classes.iter().position(|&c| c == mu2_hat),
    ) {
        (Some(i), Some(j)) if trees.mu1.classes == trees.mu2.classes => Some(i * trees.mu2.classes.len() + j),
        _ => None,
    };
    let next = TwinState {
        t: state.t + 1,
        mu1_hat,
        mu2_hat,
        label,
        distribution1: d1,
        distribution2: d2,
        capability: if latched { cfg.l_conservative } else { cfg.l_aggressive },
        latched,
    };
    Ok((next, x))
}

pub fn run_mission(cfg: &MissionConfig, trees: &TwinTrees, model: &PlateModel, layout: &SensorLayout) -> Result<MissionLog> {
    cfg.validate()?;
    trees.check(layout)?;
    let mut state = TwinState::initial(cfg, trees.mu1.classes.len());
    let mut records = Vec::with_capacity(cfg.n_steps);
    for t in 0..cfg.n_steps {
        let truth = cfg.schedule.at(t, cfg.n_steps)?;
        let flown = state.capability;
        let mut rng = step_rng(cfg.seed, t);
        let (next, x) = step(&state, &truth, trees, model, layout, cfg, flown, &mut rng)?;
        state = next;
        let next_obstacle = cfg.obstacles.iter().position(|&o| o >= t);
        records.push(StepRecord {
            t,
            true_mu1: truth.mu1,
            true_mu2: truth.mu2,
            load_factor: flown,
            features: x,
            mu1_hat: state.mu1_hat,
            mu2_hat: state.mu2_hat,
            capability: state.capability,
            next_obstacle,
            path: next_obstacle.map(|_| Path::for_capability(state.capability, cfg)),
            encounter: cfg.obstacles.contains(&t),
        });
    }
    Ok(MissionLog {
        gauge_ids: layout.usable_ids(),
        records,
    })
}

impl MissionLog {
    pub fn summary(&self, cfg: &MissionConfig) -> MissionSummary {
        MissionSummary {
            n_steps: self.records.len(),
            seed: cfg.seed,
            switch_step: self.records.iter().find(|r| r.capability < cfg.l_aggressive).map(|r| r.t),
            obstacles: self
                .records
                .iter()
                .filter(|r| r.encounter)
                .map(|r| ObstacleChoice {
                    step: r.t,
                    path: r.path.expect("encounter steps have a planned path"),
                })
                .collect(),
        }
    }

    /// Capability never rises within the mission.
    pub fn latch_holds(&self) -> bool {
        self.records.windows(2).all(|w| w[1].capability <= w[0].capability)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,true_mu1,true_mu2,load_factor,mu1_hat,mu2_hat,capability,next_obstacle,path,encounter");
        for id in &self.gauge_ids {
            let _ = write!(s, ",gauge_{id}");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{:.16e},{:.16e},{},{},{},{},{},{},{}",
                r.t,
                r.true_mu1,
                r.true_mu2,
                r.load_factor,
                r.mu1_hat,
                r.mu2_hat,
                r.capability,
                r.next_obstacle.map_or(String::new(), |o| o.to_string()),
                r.path.map_or(String::new(), |p| p.to_string()),
                r.encounter
            );
            for v in &r.features {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Text snapshot of one step: obstacle course, estimate bars and the decision
/// path of the mu1 tree.
pub fn render_frame(record: &StepRecord, cfg: &MissionConfig, explanation: &Explanation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "step {} (load factor {} flown)", record.t, record.load_factor);
    let width = 50usize;
    let pos = record.t * width / cfg.n_steps.max(1);
    let mut course: Vec<char> = vec!['-'; width];
    for &o in &cfg.obstacles {
        course[(o * width / cfg.n_steps.max(1)).min(width - 1)] = 'O';
    }
    course[pos.min(width - 1)] = '>';
    let _ = writeln!(out, "course   [{}]", course.into_iter().collect::<String>());
    if let (Some(o), Some(p)) = (record.next_obstacle, record.path) {
        let _ = writeln!(out, "next obstacle {} at step {}: {p} path", o + 1, cfg.obstacles[o]);
    }
    let bar = |v: f64| "#".repeat((v / 2.0).round().max(0.0) as usize);
    let _ = writeln!(out, "mu1 true {:5.1} est {:5.1} |{}", record.true_mu1, record.mu1_hat, bar(record.mu1_hat));
    let _ = writeln!(out, "mu2 true {:5.1} est {:5.1} |{}", record.true_mu2, record.mu2_hat, bar(record.mu2_hat));
    let _ = writeln!(out, "threshold {:5.1}     |{}^", cfg.threshold, " ".repeat(bar(cfg.threshold).len()));
    let _ = writeln!(out, "capability {}g", record.capability);
    let _ = writeln!(out, "mu1 decision path:");
    for line in explanation.to_string().lines() {
        let _ = writeln!(out, "  {line}");
    }
    out
}
