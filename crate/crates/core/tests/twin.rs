use octwin::datagen::{generate, NoiseSpec, Target};
use octwin::fem::{PlateConfig, PlateModel};
use octwin::layout::SensorLayout;
use octwin::learn::{train_with, TrainConfig, TrainData};
use octwin::library::{LoadCase, ModelLibrary};
use octwin::twin::{run_mission, MissionConfig, MissionLog, Path, Schedule, TwinTrees};

struct Setup {
    model: PlateModel,
    layout: SensorLayout,
    trees: TwinTrees,
}

/// Depth-5 trees trained on one noise-free sample per library scenario.
fn setup() -> Setup {
    let model = PlateModel::new(PlateConfig::default()).unwrap();
    let layout = SensorLayout::installed(&model.config().damage_regions);
    let ds = generate(
        &ModelLibrary::default_grid(),
        &model,
        &layout,
        &LoadCase::new(3.0),
        &NoiseSpec::new(0.0).unwrap(),
        1,
        0,
    )
    .unwrap();
    let cfg = TrainConfig {
        max_depth: 5,
        restarts: 4,
        ..TrainConfig::default()
    };
    let fit = |t| {
        let out = train_with(&TrainData::from_dataset(&ds, t).unwrap(), &cfg, &[]).unwrap();
        assert_eq!(out.report.objective.misclassification, 0.0, "{t} tree");
        out.tree
    };
    let trees = TwinTrees {
        mu1: fit(Target::Mu1),
        mu2: fit(Target::Mu2),
    };
    Setup { model, layout, trees }
}

fn quiet_table(values: Vec<[f64; 2]>) -> MissionConfig {
    MissionConfig {
        n_steps: values.len(),
        obstacles: vec![2, 5, 8],
        schedule: Schedule::Table { values },
        noise: NoiseSpec::new(0.0).unwrap(),
        ..MissionConfig::default()
    }
}

fn fly(s: &Setup, cfg: &MissionConfig) -> MissionLog {
    run_mission(cfg, &s.trees, &s.model, &s.layout).unwrap()
}

#[test]
fn constant_schedules_hold_their_estimates() {
    let s = setup();
    let pristine = fly(&s, &quiet_table(vec![[0.0, 0.0]; 10]));
    for r in &pristine.records {
        assert_eq!((r.mu1_hat, r.mu2_hat, r.capability), (0.0, 0.0, 3.0), "step {}", r.t);
        if r.next_obstacle.is_some() {
            assert_eq!(r.path, Some(Path::Aggressive));
        } else {
            assert_eq!(r.path, None, "nothing left to plan after the last obstacle");
        }
    }
    let summary = pristine.summary(&quiet_table(vec![[0.0, 0.0]; 10]));
    assert_eq!(summary.switch_step, None);
    assert!(summary.obstacles.iter().all(|o| o.path == Path::Aggressive));

    let worn = fly(&s, &quiet_table(vec![[80.0, 80.0]; 10]));
    for r in &worn.records {
        assert_eq!((r.mu1_hat, r.mu2_hat, r.capability), (80.0, 80.0, 2.0), "step {}", r.t);
    }
}

#[test]
fn crossing_the_threshold_switches_and_latches() {
    let s = setup();
    // damage rises to the threshold, then the readings fall back to pristine
    let mut values = vec![[0.0, 0.0]; 4];
    values.push([40.0, 40.0]);
    values.extend(vec![[0.0, 0.0]; 5]);
    let cfg = quiet_table(values);
    let log = fly(&s, &cfg);
    assert_eq!(log.summary(&cfg).switch_step, Some(4));
    assert_eq!(log.records[4].load_factor, 3.0, "the switch step is still flown at 3g");
    assert_eq!(log.records[5].load_factor, 2.0);
    assert_eq!(log.records[6].mu1_hat, 0.0, "pristine read back after the switch");
    assert!(log.records[4..].iter().all(|r| r.capability == 2.0));
    assert!(log.latch_holds());
    let paths: Vec<Path> = log.summary(&cfg).obstacles.iter().map(|o| o.path).collect();
    assert_eq!(paths, [Path::Aggressive, Path::Conservative, Path::Conservative]);
}

#[test]
fn obstacle_paths_follow_the_estimates() {
    let s = setup();
    let values: Vec<[f64; 2]> = (0..10).map(|t| [0.0, 10.0 * t as f64]).collect();
    let cfg = quiet_table(values);
    let log = fly(&s, &cfg);
    let mut seen_high = false;
    for r in &log.records {
        seen_high |= r.mu1_hat.max(r.mu2_hat) >= cfg.threshold;
        if r.encounter {
            let want = if seen_high { Path::Conservative } else { Path::Aggressive };
            assert_eq!(r.path, Some(want), "step {}", r.t);
        }
    }
    assert!(seen_high);
}

#[test]
fn logged_features_reproduce_the_logged_estimates() {
    let s = setup();
    let cfg = MissionConfig {
        seed: 3,
        ..MissionConfig::default()
    };
    let log = fly(&s, &cfg);
    assert_eq!(log.records.len(), 100);
    for r in &log.records {
        let m1 = s.trees.mu1.classes[s.trees.mu1.classify(&r.features).unwrap()];
        let m2 = s.trees.mu2.classes[s.trees.mu2.classify(&r.features).unwrap()];
        assert_eq!((m1, m2), (r.mu1_hat, r.mu2_hat), "step {}", r.t);
    }
    assert!(log.latch_holds());
    assert_eq!(log, fly(&s, &cfg));
}

#[test]
fn no_degradation_keeps_every_path_aggressive() {
    let s = setup();
    let cfg = MissionConfig {
        schedule: Schedule::Linear {
            start: [0.0, 0.0],
            end: [0.0, 0.0],
        },
        noise: NoiseSpec::new(0.0).unwrap(),
        ..MissionConfig::default()
    };
    let summary = fly(&s, &cfg).summary(&cfg);
    assert_eq!(summary.switch_step, None);
    assert_eq!(summary.obstacles.len(), 3);
    assert!(summary.obstacles.iter().all(|o| o.path == Path::Aggressive));
}
