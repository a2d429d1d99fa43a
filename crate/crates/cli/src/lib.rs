//! `octwin`: generate strain datasets, train and evaluate damage classifiers,
//! study sensor placement and fly simulated missions.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out`.
//! `octwin replay --manifest <file>` reruns a recorded command and checks that
//! it reproduces the same bytes.

pub mod jobs;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use octwin::datagen::{NoiseSpec, Target};
use octwin::eval::{Complexity, DEFAULT_COMPLEXITIES, DEFAULT_DEPTHS};
use octwin::fem::PlateConfig;
use octwin::layout::LayoutKind;
use octwin::learn::TrainConfig;
use octwin::placement::PlacementConfig;
use octwin::tree::TieBreak;
use octwin::twin::MissionConfig;
use serde::Deserialize;

use jobs::{GenerateSettings, Job};

#[derive(Parser)]
#[command(name = "octwin", version, about = "Structural digital twin built on optimal classification trees")]
struct Cli {
    /// Suppress the summary printed after each command.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy strain dataset and its stratified train/test split.
    Generate(GenerateArgs),
    /// Train one classification tree.
    Train(TrainArgs),
    /// Evaluate a saved tree on a dataset.
    Eval(EvalArgs),
    /// Train over a depth by split-complexity grid.
    Sweep(SweepArgs),
    /// Compare trees over installed and candidate gauge layouts.
    Sensors(SensorsArgs),
    /// Fly a mission with a pair of saved trees.
    Simulate(SimulateArgs),
    /// Print the decision path of one dataset row.
    Explain(ExplainArgs),
    /// Rerun a recorded command and check its artifacts.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// JSON file with optional `plate`, `generate`, `train`, `placement` and `mission` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Mu1,
    Mu2,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Mu1 => Target::Mu1,
            TargetArg::Mu2 => Target::Mu2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Installed,
    Candidate,
}

impl From<LayoutArg> for LayoutKind {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Installed => LayoutKind::Installed,
            LayoutArg::Candidate => LayoutKind::Candidate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Lowest,
    Highest,
}

#[derive(Args)]
struct NoiseFlags {
    /// Number of noisy samples per library model.
    #[arg(long = "s")]
    s: Option<usize>,
    /// Noise variance in microstrain squared.
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long)]
    load_factor: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_local_search_passes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    tie_break: Option<TieArg>,
}

impl TrainFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.min_leaf {
            cfg.min_leaf = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.max_local_search_passes {
            cfg.max_local_search_passes = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(t) = self.tie_break {
            cfg.tie_break = match t {
                TieArg::Lowest => TieBreak::LowestIndex,
                TieArg::Highest => TieBreak::HighestIndex,
            };
        }
        cfg
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    noise: NoiseFlags,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long)]
    depth: Option<usize>,
    /// Features per split: a positive integer or `unlimited`.
    #[arg(long)]
    split_complexity: Option<Complexity>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    test_dataset: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    complexities: Option<Vec<Complexity>>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct SensorsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    noise: NoiseFlags,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long)]
    split_complexity: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tree_mu1: PathBuf,
    #[arg(long)]
    tree_mu2: PathBuf,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    row: usize,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    plate: PlateConfig,
    generate: GenerateSettings,
    train: TrainConfig,
    placement: PlacementConfig,
    mission: MissionConfig,
    layout: Option<LayoutKind>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

fn apply_noise(flags: &NoiseFlags, s: &mut usize, variance: &mut f64, load: &mut f64, frac: &mut f64) {
    if let Some(v) = flags.s {
        *s = v;
    }
    if let Some(v) = flags.variance {
        *variance = v;
    }
    if let Some(v) = flags.load_factor {
        *load = v;
    }
    if let Some(v) = flags.test_fraction {
        *frac = v;
    }
}

fn resolve(command: Command) -> Result<(Job, PathBuf)> {
    Ok(match command {
        Command::Generate(a) => {
            let fc = FileConfig::load(a.common.config.as_deref())?;
            let mut g = fc.generate;
            apply_noise(&a.noise, &mut g.s, &mut g.variance, &mut g.load_factor, &mut g.test_fraction);
            if let Some(l) = a.layout {
                g.layout = l.into();
            }
            if let Some(v) = a.seed {
                g.seed = v;
            }
            (
                Job::Generate {
                    plate: fc.plate,
                    settings: g,
                },
                a.common.out,
            )
        }
        Command::Train(a) => {
            let fc = FileConfig::load(a.common.config.as_deref())?;
            let mut cfg = a.train.apply(fc.train);
            if let Some(d) = a.depth {
                cfg.max_depth = d;
            }
            let split_complexity = a
                .split_complexity
                .unwrap_or(Complexity::Limit(cfg.max_split_complexity.max(1)));
            (
                Job::Train {
                    dataset: a.dataset,
                    target: a.target.into(),
                    split_complexity,
                    config: cfg,
                },
                a.common.out,
            )
        }
        Command::Eval(a) => (
            Job::Eval {
                tree: a.tree,
                dataset: a.dataset,
                target: a.target.map(Into::into),
            },
            a.common.out,
        ),
        Command::Sweep(a) => {
            let fc = FileConfig::load(a.common.config.as_deref())?;
            (
                Job::Sweep {
                    dataset: a.dataset,
                    test_dataset: a.test_dataset,
                    target: a.target.into(),
                    depths: a.depths.unwrap_or_else(|| DEFAULT_DEPTHS.to_vec()),
                    complexities: a.complexities.unwrap_or_else(|| DEFAULT_COMPLEXITIES.to_vec()),
                    config: a.train.apply(fc.train),
                },
                a.common.out,
            )
        }
        Command::Sensors(a) => {
            let fc = FileConfig::load(a.common.config.as_deref())?;
            let mut p = fc.placement;
            let mut variance = p.noise.variance;
            apply_noise(&a.noise, &mut p.s, &mut variance, &mut p.load_factor, &mut p.test_fraction);
            p.noise = NoiseSpec { variance };
            if let Some(t) = a.target {
                p.target = t.into();
            }
            if let Some(d) = a.depths {
                p.depths = d;
            }
            if let Some(k) = a.split_complexity {
                p.split_complexity = k;
            }
            if let Some(seed) = a.train.seed {
                p.seed = seed;
            }
            p.train = a.train.apply(p.train);
            (
                Job::Sensors {
                    plate: fc.plate,
                    levels: fc.generate.levels,
                    placement: p,
                },
                a.common.out,
            )
        }
        Command::Simulate(a) => {
            let fc = FileConfig::load(a.common.config.as_deref())?;
            let mut m = fc.mission;
            if let Some(v) = a.seed {
                m.seed = v;
            }
            if let Some(v) = a.variance {
                m.noise = NoiseSpec { variance: v };
            }
            if let Some(v) = a.n_steps {
                m.n_steps = v;
            }
            if let Some(v) = a.threshold {
                m.threshold = v;
            }
            let layout = a.layout.map(Into::into).or(fc.layout).unwrap_or(LayoutKind::Installed);
            (
                Job::Simulate {
                    plate: fc.plate,
                    layout,
                    tree_mu1: a.tree_mu1,
                    tree_mu2: a.tree_mu2,
                    mission: m,
                },
                a.common.out,
            )
        }
        Command::Explain(a) => (
            Job::Explain {
                tree: a.tree,
                dataset: a.dataset,
                row: a.row,
            },
            a.common.out,
        ),
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    })
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    if let Command::Replay(r) = cli.command {
        return manifest::replay(&r.manifest, r.out, !cli.quiet);
    }
    let (job, out) = resolve(cli.command)?;
    manifest::run(job, &out, !cli.quiet)?;
    Ok(())
}
