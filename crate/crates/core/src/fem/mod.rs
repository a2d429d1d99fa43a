//! Plane-stress cantilever plate used as the surrogate structural model.
//!
//! The planform is a rectangle of `span × chord` meshed with bilinear
//! quadrilaterals. The root edge (span = 0) is clamped. Each damage region
//! scales the stiffness of the elements whose centroid lies inside it by
//! `1 - μ/100`. The aerodynamic load is an elliptic, chordwise-directed line
//! load along a fixed chord station, so the plate bends in its own plane like
//! a deep cantilever beam.

mod banded;

pub use banded::{BandedCholesky, BandedMatrix};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned planform rectangle in span/chord fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub span: [f64; 2],
    pub chord: [f64; 2],
}

impl Rect {
    /// Closed containment test in fractional coordinates.
    pub fn contains(&self, span: f64, chord: f64) -> bool {
        self.span[0] <= span && span <= self.span[1] && self.chord[0] <= chord && chord <= self.chord[1]
    }

    fn overlaps(&self, other: &Rect) -> bool {
        self.span[0] < other.span[1]
            && other.span[0] < self.span[1]
            && self.chord[0] < other.chord[1]
            && other.chord[0] < self.chord[1]
    }

    /// Euclidean distance in physical units from a point to the rectangle (0 inside).
    pub fn distance(&self, span: f64, chord: f64, span_len: f64, chord_len: f64) -> f64 {
        let ds = (self.span[0] - span).max(0.0).max(span - self.span[1]) * span_len;
        let dc = (self.chord[0] - chord).max(0.0).max(chord - self.chord[1]) * chord_len;
        ds.hypot(dc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub thickness: f64,
}

/// JSON-configurable plate description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateConfig {
    pub span: f64,
    pub chord: f64,
    pub n_span: usize,
    pub n_chord: usize,
    pub material: Material,
    pub damage_regions: Vec<Rect>,
    /// Chord fraction of the spanwise line carrying the lift load.
    pub load_chord_station: f64,
    /// Weight whose multiple `L` is the total lift.
    pub reference_weight: f64,
    #[serde(default = "default_true")]
    pub clamped_root: bool,
}

fn default_true() -> bool {
    true
}

/// Calibrated so the pristine plate peaks at 1000 microstrain over the
/// installed gauges at L = 3. Reproduced by `library::calibrate_reference_weight`.
pub const DEFAULT_REFERENCE_WEIGHT: f64 = 8894.136887275028;

impl Default for PlateConfig {
    fn default() -> Self {
        Self {
            span: 1.8,
            chord: 0.4,
            n_span: 48,
            n_chord: 12,
            material: Material {
                youngs_modulus: 50e9,
                poisson_ratio: 0.3,
                thickness: 0.003,
            },
            damage_regions: vec![
                Rect {
                    span: [19.0 / 48.0, 24.0 / 48.0],
                    chord: [4.0 / 12.0, 11.0 / 12.0],
                },
                Rect {
                    span: [33.0 / 48.0, 37.0 / 48.0],
                    chord: [4.0 / 12.0, 11.0 / 12.0],
                },
            ],
            load_chord_station: 0.5,
            reference_weight: DEFAULT_REFERENCE_WEIGHT,
            clamped_root: true,
        }
    }
}

impl PlateConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("span", self.span),
            ("chord", self.chord),
            ("youngs_modulus", self.material.youngs_modulus),
            ("thickness", self.material.thickness),
            ("reference_weight", self.reference_weight),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        let nu = self.material.poisson_ratio;
        if !(0.0..0.5).contains(&nu) {
            return Err(Error::Domain(format!("poisson_ratio must be in [0, 0.5), got {nu}")));
        }
        if self.n_span == 0 || self.n_chord == 0 {
            return Err(Error::Domain("mesh needs at least one element per direction".into()));
        }
        if !(0.0..=1.0).contains(&self.load_chord_station) {
            return Err(Error::Domain("load_chord_station must be a chord fraction".into()));
        }
        for (i, r) in self.damage_regions.iter().enumerate() {
            let ok = |b: [f64; 2]| 0.0 <= b[0] && b[0] < b[1] && b[1] <= 1.0;
            if !ok(r.span) || !ok(r.chord) {
                return Err(Error::Domain(format!("damage region {} must lie inside the planform", i + 1)));
            }
            for (j, other) in self.damage_regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(other) {
                    return Err(Error::Domain(format!(
                        "damage regions {} and {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn element_width(&self) -> f64 {
        (self.span / self.n_span as f64).max(self.chord / self.n_chord as f64)
    }
}

/// Nodal displacement field, two components per node including clamped nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub values: Vec<f64>,
    /// Strain energy `½ uᵀ f` of the solved state.
    pub strain_energy: f64,
    /// `‖K u − f‖ / ‖f‖` over the free equations (0 for zero load).
    pub relative_residual: f64,
}

impl Displacement {
    pub fn max_magnitude(&self) -> f64 {
        self.values
            .chunks(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max)
    }
}

/// Assembled-on-demand plate model; immutable after construction.
#[derive(Debug, Clone)]
pub struct PlateModel {
    cfg: PlateConfig,
    dx: f64,
    dy: f64,
    element_stiffness: [[f64; 8]; 8],
    /// Damage region index of each element (row-major over span, then chord).
    element_region: Vec<Option<usize>>,
    load_row: usize,
}

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn shape_gradients(xi: f64, eta: f64, dx: f64, dy: f64) -> [(f64, f64); 4] {
    let mut g = [(0.0, 0.0); 4];
    for (k, &(xk, ek)) in CORNERS.iter().enumerate() {
        let dn_dxi = 0.25 * xk * (1.0 + eta * ek);
        let dn_deta = 0.25 * ek * (1.0 + xi * xk);
        g[k] = (dn_dxi * 2.0 / dx, dn_deta * 2.0 / dy);
    }
    g
}

fn q4_stiffness(mat: &Material, dx: f64, dy: f64) -> [[f64; 8]; 8] {
    let e = mat.youngs_modulus;
    let nu = mat.poisson_ratio;
    let c = e / (1.0 - nu * nu);
    let d = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
    let mut k = [[0.0; 8]; 8];
    let jac = dx * dy / 4.0;
    for &xi in &[-GAUSS, GAUSS] {
        for &eta in &[-GAUSS, GAUSS] {
            let g = shape_gradients(xi, eta, dx, dy);
            // B is 3x8: rows exx, eyy, gxy
            let mut b = [[0.0; 8]; 3];
            for (n, &(gx, gy)) in g.iter().enumerate() {
                b[0][2 * n] = gx;
                b[1][2 * n + 1] = gy;
                b[2][2 * n] = gy;
                b[2][2 * n + 1] = gx;
            }
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        for q in 0..3 {
                            s += b[r][i] * d[r][q] * b[q][j];
                        }
                    }
                    k[i][j] += s * jac * mat.thickness;
                }
            }
        }
    }
    k
}

// Antiderivatives of sqrt(1 - t^2) and t sqrt(1 - t^2).
fn ellipse_i0(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    0.5 * (t * (1.0 - t * t).sqrt() + t.asin())
}

fn ellipse_i1(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    -(1.0 - t * t).powf(1.5) / 3.0
}

impl PlateModel {
    pub fn new(cfg: PlateConfig) -> Result<Self> {
        cfg.validate()?;
        let dx = cfg.span / cfg.n_span as f64;
        let dy = cfg.chord / cfg.n_chord as f64;
        let element_stiffness = q4_stiffness(&cfg.material, dx, dy);
        let mut element_region = Vec::with_capacity(cfg.n_span * cfg.n_chord);
        for ei in 0..cfg.n_span {
            for ej in 0..cfg.n_chord {
                let cs = (ei as f64 + 0.5) / cfg.n_span as f64;
                let cc = (ej as f64 + 0.5) / cfg.n_chord as f64;
                element_region.push(cfg.damage_regions.iter().position(|r| r.contains(cs, cc)));
            }
        }
        let load_row = (cfg.load_chord_station * cfg.n_chord as f64).round() as usize;
        Ok(Self {
            cfg,
            dx,
            dy,
            element_stiffness,
            element_region,
            load_row,
        })
    }

    pub fn config(&self) -> &PlateConfig {
        &self.cfg
    }

    pub fn n_nodes(&self) -> usize {
        (self.cfg.n_span + 1) * (self.cfg.n_chord + 1)
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * (self.cfg.n_chord + 1) + j
    }

    /// Number of elements assigned to each damage region.
    pub fn region_element_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cfg.damage_regions.len()];
        for r in self.element_region.iter().flatten() {
            counts[*r] += 1;
        }
        counts
    }

    fn first_free_dof(&self) -> usize {
        if self.cfg.clamped_root {
            2 * (self.cfg.n_chord + 1)
        } else {
            0
        }
    }

    /// Nodal force vector (all dofs) for a total chordwise lift `total`.
    pub fn load_vector(&self, total: f64) -> Vec<f64> {
        let mut f = vec![0.0; 2 * self.n_nodes()];
        if total == 0.0 {
            return f;
        }
        let ns = self.cfg.n_span;
        // q(x) = q0 sqrt(1 - (x/S)^2), integral over [0, S] equals total.
        let q0 = 4.0 * total / (std::f64::consts::PI * self.cfg.span);
        for e in 0..ns {
            let ta = e as f64 / ns as f64;
            let tb = (e + 1) as f64 / ns as f64;
            let h = tb - ta;
            let i0 = ellipse_i0(tb) - ellipse_i0(ta);
            let i1 = ellipse_i1(tb) - ellipse_i1(ta);
            let scale = q0 * self.cfg.span / h;
            let fa = scale * (tb * i0 - i1);
            let fb = scale * (i1 - ta * i0);
            f[2 * self.node(e, self.load_row) + 1] += fa;
            f[2 * self.node(e + 1, self.load_row) + 1] += fb;
        }
        f
    }

    fn element_dofs(&self, ei: usize, ej: usize) -> [usize; 8] {
        let nodes = [
            self.node(ei, ej),
            self.node(ei + 1, ej),
            self.node(ei + 1, ej + 1),
            self.node(ei, ej + 1),
        ];
        let mut d = [0; 8];
        for (k, n) in nodes.iter().enumerate() {
            d[2 * k] = 2 * n;
            d[2 * k + 1] = 2 * n + 1;
        }
        d
    }

    /// Stiffness scale of every element for the given per-region reductions (percent).
    fn element_scales(&self, reductions: &[f64]) -> Result<Vec<f64>> {
        if reductions.len() < self.cfg.damage_regions.len() {
            return Err(Error::Domain(format!(
                "scenario supplies {} parameters for {} damage regions",
                reductions.len(),
                self.cfg.damage_regions.len()
            )));
        }
        for (i, &mu) in reductions.iter().enumerate() {
            if !(mu.is_finite() && (0.0..100.0).contains(&mu)) {
                return Err(Error::Domain(format!(
                    "stiffness reduction mu{} = {mu} must lie in [0, 100)",
                    i + 1
                )));
            }
        }
        Ok(self
            .element_region
            .iter()
            .map(|r| r.map_or(1.0, |k| 1.0 - reductions[k] / 100.0))
            .collect())
    }

    /// Assembles the reduced (free-dof) stiffness matrix.
    pub fn assemble(&self, reductions: &[f64]) -> Result<BandedMatrix> {
        let scales = self.element_scales(reductions)?;
        let off = self.first_free_dof();
        let n_free = 2 * self.n_nodes() - off;
        let hb = 2 * (self.cfg.n_chord + 2) + 1;
        let mut k = BandedMatrix::zeros(n_free, hb);
        let ke = &self.element_stiffness;
        for ei in 0..self.cfg.n_span {
            for ej in 0..self.cfg.n_chord {
                let s = scales[ei * self.cfg.n_chord + ej];
                let dofs = self.element_dofs(ei, ej);
                for a in 0..8 {
                    if dofs[a] < off {
                        continue;
                    }
                    for b in 0..8 {
                        if dofs[b] < off || dofs[b] > dofs[a] {
                            continue;
                        }
                        k.add(dofs[a] - off, dofs[b] - off, s * ke[a][b]);
                    }
                }
            }
        }
        Ok(k)
    }

    /// Solves `K(μ) u = f` for per-region reductions `reductions` (percent)
    /// and total lift `total`.
    pub fn solve(&self, reductions: &[f64], total: f64) -> Result<Displacement> {
        let k = self.assemble(reductions)?;
        let f_all = self.load_vector(total);
        let off = self.first_free_dof();
        let f = &f_all[off..];
        let chol = k.cholesky(1e-10)?;
        let u_free = chol.solve(f);
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let relative_residual = if fnorm == 0.0 {
            0.0
        } else {
            let ku = k.mul_vec(&u_free);
            let r = ku.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            r / fnorm
        };
        if relative_residual > 1e-8 {
            return Err(Error::Solver(format!(
                "relative residual {relative_residual:e} exceeds 1e-8"
            )));
        }
        let strain_energy = 0.5 * u_free.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        let mut values = vec![0.0; off];
        values.extend(u_free);
        Ok(Displacement {
            values,
            strain_energy,
            relative_residual,
        })
    }

    /// Spanwise normal strain εxx at a planform point given as span/chord fractions.
    pub fn strain_xx(&self, u: &Displacement, span_frac: f64, chord_frac: f64) -> Result<f64> {
        const EPS: f64 = 1e-12;
        if !(-EPS..=1.0 + EPS).contains(&span_frac) || !(-EPS..=1.0 + EPS).contains(&chord_frac) {
            return Err(Error::Domain(format!(
                "point (span {span_frac}, chord {chord_frac}) lies outside the planform"
            )));
        }
        let x = span_frac.clamp(0.0, 1.0) * self.cfg.span;
        let y = chord_frac.clamp(0.0, 1.0) * self.cfg.chord;
        let ei = ((x / self.dx).floor() as usize).min(self.cfg.n_span - 1);
        let ej = ((y / self.dy).floor() as usize).min(self.cfg.n_chord - 1);
        let xi = 2.0 * (x - ei as f64 * self.dx) / self.dx - 1.0;
        let eta = 2.0 * (y - ej as f64 * self.dy) / self.dy - 1.0;
        let g = shape_gradients(xi, eta, self.dx, self.dy);
        let dofs = self.element_dofs(ei, ej);
        Ok(g
            .iter()
            .enumerate()
            .map(|(k, &(gx, _))| gx * u.values[dofs[2 * k]])
            .sum())
    }
}
