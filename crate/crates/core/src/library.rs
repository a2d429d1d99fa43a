//! Model library: damage scenarios over a parameter grid and the forward
//! map from a scenario to predicted strain-gauge readings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fem::{Displacement, PlateConfig, PlateModel};
use crate::layout::SensorLayout;
use crate::{Error, Result};

/// Percentage stiffness reductions in damage regions 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageScenario {
    pub mu1: f64,
    pub mu2: f64,
}

impl DamageScenario {
    pub const PRISTINE: Self = Self { mu1: 0.0, mu2: 0.0 };

    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        let s = Self { mu1, mu2 };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v.is_finite() && (0.0..=100.0).contains(&v)) {
                return Err(Error::Domain(format!("{name} = {v} must be a percentage in [0, 100]")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> [f64; 2] {
        [self.mu1, self.mu2]
    }
}

pub const DEFAULT_LEVELS: [f64; 5] = [0.0, 20.0, 40.0, 60.0, 80.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLibrary {
    pub grid_values: Vec<f64>,
    /// Row-major over (mu1, mu2); the position of a scenario is its label.
    pub scenarios: Vec<DamageScenario>,
}

impl ModelLibrary {
    pub fn build(levels: &[f64]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("library needs at least one parameter level".into()));
        }
        for &v in levels {
            if !(v.is_finite() && (0.0..100.0).contains(&v)) {
                return Err(Error::Domain(format!("level {v} must lie in [0, 100)")));
            }
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("levels must be strictly ascending".into()));
        }
        let scenarios = levels
            .iter()
            .flat_map(|&mu1| levels.iter().map(move |&mu2| DamageScenario { mu1, mu2 }))
            .collect();
        Ok(Self {
            grid_values: levels.to_vec(),
            scenarios,
        })
    }

    pub fn default_grid() -> Self {
        Self::build(&DEFAULT_LEVELS).expect("default levels are valid")
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Index of the grid level equal to `value`, if any.
    pub fn level_index(&self, value: f64) -> Option<usize> {
        self.grid_values.iter().position(|&v| v == value)
    }

    /// Library label of the grid scenario with the given parameter values.
    pub fn label_of(&self, mu1: f64, mu2: f64) -> Option<usize> {
        self.scenarios.iter().position(|s| s.mu1 == mu1 && s.mu2 == mu2)
    }
}

/// Load factor applied to the reference weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub load_factor: f64,
}

impl LoadCase {
    pub fn new(load_factor: f64) -> Self {
        Self { load_factor }
    }

    pub fn total_lift(&self, reference_weight: f64) -> f64 {
        self.load_factor * reference_weight
    }
}

/// Predicted gauge readings in microstrain, compressive positive, one per
/// usable gauge in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainField {
    pub gauge_ids: Vec<u32>,
    pub microstrain: Vec<f64>,
}

impl StrainField {
    pub fn to_csv(&self, layout: &SensorLayout) -> String {
        let mut s = String::from("gauge_id,x,y,microstrain\n");
        for (id, v) in self.gauge_ids.iter().zip(&self.microstrain) {
            let g = layout.gauge(*id).expect("strain field ids come from the layout");
            let _ = writeln!(s, "{},{:.16e},{:.16e},{:.16e}", id, g.x, g.y, v);
        }
        s
    }
}

/// Solves the plate for a (possibly off-grid) scenario.
pub fn solve_plate(model: &PlateModel, scenario: &DamageScenario, load: &LoadCase) -> Result<Displacement> {
    scenario.check()?;
    let total = load.total_lift(model.config().reference_weight);
    model.solve(&scenario.params(), total)
}

fn gauge_strains(model: &PlateModel, u: &Displacement, layout: &SensorLayout) -> Result<StrainField> {
    let mut gauge_ids = Vec::new();
    let mut microstrain = Vec::new();
    for g in layout.usable() {
        let exx = model.strain_xx(u, g.y, g.x)?;
        gauge_ids.push(g.id);
        // compressive strain reported as positive
        microstrain.push(-exx * 1e6);
    }
    Ok(StrainField { gauge_ids, microstrain })
}

/// Forward map: spanwise strain at every usable gauge of `layout`.
pub fn predict_strain(
    model: &PlateModel,
    scenario: &DamageScenario,
    load: &LoadCase,
    layout: &SensorLayout,
) -> Result<StrainField> {
    layout.validate()?;
    let u = solve_plate(model, scenario, load)?;
    gauge_strains(model, &u, layout)
}

/// Reference weight giving a pristine peak of `target` microstrain over the
/// usable gauges at `load_factor`. Strain is linear in the reference weight,
/// so one solve at unit weight fixes it.
pub fn calibrate_reference_weight(
    cfg: &PlateConfig,
    layout: &SensorLayout,
    load_factor: f64,
    target: f64,
) -> Result<f64> {
    let unit = PlateModel::new(PlateConfig {
        reference_weight: 1.0,
        ..cfg.clone()
    })?;
    let field = predict_strain(&unit, &DamageScenario::PRISTINE, &LoadCase::new(load_factor), layout)?;
    let peak = field.microstrain.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Domain("pristine plate shows no strain at the gauges".into()));
    }
    Ok(target / peak)
}
