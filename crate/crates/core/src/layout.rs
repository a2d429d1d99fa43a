//! Strain-gauge layouts on the wing planform.
//!
//! Installed gauges sit in two spanwise rows (chord 0.30 and 0.70), twelve
//! per row, evenly spaced between 25% and 75% span. Ids run root to tip along
//! the 0.30 row (1-12) and then along the 0.70 row (13-24). Candidate gauges
//! (ids 25-82) lie on a staggered grid of four rows spanning 10%-95%.
//! A gauge is excluded when it falls inside a damage region.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fem::Rect;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub id: u32,
    /// Chordwise fraction.
    pub x: f64,
    /// Spanwise fraction.
    pub y: f64,
    pub installed: bool,
    pub excluded: bool,
}

impl Gauge {
    pub fn usable(&self) -> bool {
        !self.excluded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Installed,
    Candidate,
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "installed" => Ok(Self::Installed),
            "candidate" => Ok(Self::Candidate),
            other => Err(Error::Parse(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub gauges: Vec<Gauge>,
}

pub const INSTALLED_ROWS: [f64; 2] = [0.30, 0.70];
pub const INSTALLED_PER_ROW: usize = 12;
pub const CANDIDATE_ROWS: [f64; 4] = [0.15, 0.45, 0.55, 0.85];
const CANDIDATE_SPAN: [f64; 2] = [0.10, 0.95];
const CANDIDATE_PITCH_COUNT: usize = 15;

fn installed_positions() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &x in &INSTALLED_ROWS {
        for k in 0..INSTALLED_PER_ROW {
            let y = 0.25 + 0.5 * k as f64 / (INSTALLED_PER_ROW - 1) as f64;
            out.push((x, y));
        }
    }
    out
}

fn candidate_positions() -> Vec<(f64, f64)> {
    let pitch = (CANDIDATE_SPAN[1] - CANDIDATE_SPAN[0]) / (CANDIDATE_PITCH_COUNT - 1) as f64;
    let mut out = Vec::new();
    for (r, &x) in CANDIDATE_ROWS.iter().enumerate() {
        // rows alternate between the full grid (15 stations) and the
        // half-pitch staggered grid (14 stations), starting staggered.
        if r % 2 == 0 {
            for k in 0..CANDIDATE_PITCH_COUNT - 1 {
                out.push((x, CANDIDATE_SPAN[0] + (k as f64 + 0.5) * pitch));
            }
        } else {
            for k in 0..CANDIDATE_PITCH_COUNT {
                out.push((x, CANDIDATE_SPAN[0] + k as f64 * pitch));
            }
        }
    }
    out
}

impl SensorLayout {
    fn from_positions(positions: &[(f64, f64, bool)], regions: &[Rect]) -> Self {
        let gauges = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y, installed))| Gauge {
                id: i as u32 + 1,
                x,
                y,
                installed,
                excluded: regions.iter().any(|r| r.contains(y, x)),
            })
            .collect();
        Self { gauges }
    }

    /// The 24 gauges fitted to the test aircraft.
    pub fn installed(regions: &[Rect]) -> Self {
        let pos: Vec<_> = installed_positions().into_iter().map(|(x, y)| (x, y, true)).collect();
        Self::from_positions(&pos, regions)
    }

    /// Installed gauges plus 58 candidate locations.
    pub fn candidate(regions: &[Rect]) -> Self {
        let pos: Vec<_> = installed_positions()
            .into_iter()
            .map(|(x, y)| (x, y, true))
            .chain(candidate_positions().into_iter().map(|(x, y)| (x, y, false)))
            .collect();
        Self::from_positions(&pos, regions)
    }

    pub fn of_kind(kind: LayoutKind, regions: &[Rect]) -> Self {
        match kind {
            LayoutKind::Installed => Self::installed(regions),
            LayoutKind::Candidate => Self::candidate(regions),
        }
    }

    /// Re-derives exclusion flags for a new set of damage regions.
    pub fn with_regions(&self, regions: &[Rect]) -> Self {
        let gauges = self
            .gauges
            .iter()
            .map(|g| Gauge {
                excluded: regions.iter().any(|r| r.contains(g.y, g.x)),
                ..*g
            })
            .collect();
        Self { gauges }
    }

    pub fn usable(&self) -> impl Iterator<Item = &Gauge> {
        self.gauges.iter().filter(|g| g.usable())
    }

    /// Gauge ids in feature-column order.
    pub fn usable_ids(&self) -> Vec<u32> {
        self.usable().map(|g| g.id).collect()
    }

    pub fn excluded_ids(&self) -> Vec<u32> {
        self.gauges.iter().filter(|g| g.excluded).map(|g| g.id).collect()
    }

    pub fn gauge(&self, id: u32) -> Option<&Gauge> {
        self.gauges.iter().find(|g| g.id == id)
    }

    pub fn max_id(&self) -> u32 {
        self.gauges.iter().map(|g| g.id).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.gauges.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if ids.first() == Some(&0) {
            return Err(Error::Input("gauge ids must be positive".into()));
        }
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("gauge ids must be unique".into()));
        }
        for g in &self.gauges {
            if !(0.0..=1.0).contains(&g.x) || !(0.0..=1.0).contains(&g.y) {
                return Err(Error::Domain(format!("gauge {} lies outside the planform", g.id)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,x,y,installed,excluded\n");
        for g in &self.gauges {
            let _ = writeln!(s, "{},{:.16e},{:.16e},{},{}", g.id, g.x, g.y, g.installed, g.excluded);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("id,x,y,installed,excluded") => {}
            other => return Err(Error::Parse(format!("unexpected layout header {other:?}"))),
        }
        let mut gauges = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("layout row {} has {} fields", n + 2, f.len())));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            let b = |s: &str| s.parse::<bool>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            gauges.push(Gauge {
                id: f[0].parse().map_err(|e| Error::Parse(format!("{}: {e}", f[0])))?,
                x: p(f[1])?,
                y: p(f[2])?,
                installed: b(f[3])?,
                excluded: b(f[4])?,
            });
        }
        let layout = Self { gauges };
        layout.validate()?;
        Ok(layout)
    }

    /// Character map of the planform: root on the left, leading chord row on top.
    /// `#` marks damage-region cells, `o` usable gauges, `x` excluded gauges and
    /// `@` the gauges listed in `highlight`.
    pub fn render_map(&self, regions: &[Rect], highlight: &[u32], cols: usize, rows: usize) -> String {
        let mut grid = vec![vec!['.'; cols]; rows];
        for (r, row) in grid.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let y = (c as f64 + 0.5) / cols as f64;
                let x = 1.0 - (r as f64 + 0.5) / rows as f64;
                if regions.iter().any(|reg| reg.contains(y, x)) {
                    *cell = '#';
                }
            }
        }
        for g in &self.gauges {
            let c = ((g.y * cols as f64) as usize).min(cols - 1);
            let r = (((1.0 - g.x) * rows as f64) as usize).min(rows - 1);
            grid[r][c] = if highlight.contains(&g.id) {
                '@'
            } else if g.excluded {
                'x'
            } else {
                'o'
            };
        }
        let mut out = String::new();
        for row in grid {
            out.extend(row);
            out.push('\n');
        }
        out
    }
}
