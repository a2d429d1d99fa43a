//! Noisy forward map: labeled datasets of load-normalized strain features.
//!
//! Every library scenario is solved once. Each of its `s` samples adds an
//! independent Gaussian noise vector and divides by the load factor. Noise is
//! drawn from a ChaCha stream keyed by `(scenario index, sample index)`, and
//! the draw for gauge `id` is always the `id`-th normal of that stream, so two
//! layouts generated with the same seed share noise on common gauges and the
//! result does not depend on thread scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::PlateModel;
use crate::hash::sha256_hex;
use crate::layout::SensorLayout;
use crate::library::{predict_strain, LoadCase, ModelLibrary};
use crate::{Error, Result};

/// Zero-mean white Gaussian noise with covariance `variance · I` (microstrain²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { variance: 1000.0 }
    }
}

impl NoiseSpec {
    pub fn new(variance: f64) -> Result<Self> {
        let n = Self { variance };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be nonnegative, got {}",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Which quantity a classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mu1,
    Mu2,
    /// The library label itself.
    Scenario,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu1" => Ok(Self::Mu1),
            "mu2" => Ok(Self::Mu2),
            "scenario" => Ok(Self::Scenario),
            other => Err(Error::Parse(format!("unknown target `{other}`"))),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mu1 => "mu1",
            Self::Mu2 => "mu2",
            Self::Scenario => "scenario",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub s: usize,
    pub load_factor: f64,
    pub noise_variance: f64,
    pub grid_values: Vec<f64>,
    /// SHA-256 of the layout CSV.
    pub layout_hash: String,
    pub layout: SensorLayout,
    /// SHA-256 of the plate configuration JSON the strains came from.
    pub plate_hash: String,
}

/// Feature matrix (row-major, `n × p`), library labels, parameter targets and
/// sample weights. Feature column `k` is gauge `gauge_ids[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub gauge_ids: Vec<u32>,
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
    pub targets: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub meta: DatasetMeta,
}

/// Divides a raw strain reading by the load factor.
pub fn load_normalize(raw: &[f64], load_factor: f64) -> Result<Vec<f64>> {
    if load_factor == 0.0 || !load_factor.is_finite() {
        return Err(Error::Domain(format!("cannot normalize by load factor {load_factor}")));
    }
    Ok(raw.iter().map(|v| v / load_factor).collect())
}

/// RNG for the noise of one `(scenario, sample)` pair.
pub fn noise_stream(seed: u64, scenario: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | sample as u64);
    rng
}

/// Noise for gauges `1..=max_id` (index `id - 1`) from one stream.
pub fn noise_vector(rng: &mut ChaCha8Rng, max_id: u32, std_dev: f64) -> Vec<f64> {
    (0..max_id)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std_dev * z
        })
        .collect()
}

/// Samples the noisy forward map for every library scenario.
pub fn generate(
    library: &ModelLibrary,
    model: &PlateModel,
    layout: &SensorLayout,
    load: &LoadCase,
    noise: &NoiseSpec,
    s: usize,
    seed: u64,
) -> Result<Dataset> {
    noise.validate()?;
    if s == 0 {
        return Err(Error::Domain("s must be at least 1".into()));
    }
    if !(load.load_factor > 0.0 && load.load_factor.is_finite()) {
        return Err(Error::Domain(format!("load factor must be positive, got {}", load.load_factor)));
    }
    layout.validate()?;
    let gauge_ids = layout.usable_ids();
    let p = gauge_ids.len();
    let max_id = layout.max_id();
    let sigma = noise.std_dev();
    let blocks: Vec<Vec<f64>> = library
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(j, sc)| -> Result<Vec<f64>> {
            let eps = predict_strain(model, sc, load, layout)?;
            let mut block = Vec::with_capacity(s * p);
            for k in 0..s {
                let mut rng = noise_stream(seed, j, k);
                let v = noise_vector(&mut rng, max_id, sigma);
                let raw: Vec<f64> = eps
                    .microstrain
                    .iter()
                    .zip(&gauge_ids)
                    .map(|(e, id)| e + v[*id as usize - 1])
                    .collect();
                block.extend(load_normalize(&raw, load.load_factor)?);
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;

    let n = s * library.len();
    let mut x = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for (j, block) in blocks.into_iter().enumerate() {
        x.extend(block);
        let sc = library.scenarios[j];
        labels.extend(std::iter::repeat_n(j, s));
        targets.extend(std::iter::repeat_n([sc.mu1, sc.mu2], s));
    }
    let layout_csv = layout.to_csv();
    let plate_json = serde_json::to_string(model.config())?;
    Ok(Dataset {
        gauge_ids,
        x,
        labels,
        targets,
        weights: vec![1.0; n],
        meta: DatasetMeta {
            seed,
            s,
            load_factor: load.load_factor,
            noise_variance: noise.variance,
            grid_values: library.grid_values.clone(),
            layout_hash: sha256_hex(layout_csv.as_bytes()),
            layout: layout.clone(),
            plate_hash: sha256_hex(plate_json.as_bytes()),
        },
    })
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.gauge_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.x.len() != n * self.p() || self.targets.len() != n || self.weights.len() != n {
            return Err(Error::Input("dataset columns have inconsistent lengths".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite features".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("weights must be finite and nonnegative".into()));
        }
        if n > 0 && self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Input("weights must have a positive sum".into()));
        }
        Ok(())
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.p());
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            gauge_ids: self.gauge_ids.clone(),
            x,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Appends externally sourced rows (e.g. flight-test data) with their weights.
    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        if other.gauge_ids != self.gauge_ids {
            return Err(Error::Input("appended rows use a different gauge set".into()));
        }
        self.x.extend_from_slice(&other.x);
        self.labels.extend_from_slice(&other.labels);
        self.targets.extend_from_slice(&other.targets);
        self.weights.extend_from_slice(&other.weights);
        self.validate()
    }

    /// Per-row class index and the numeric value each class stands for.
    pub fn classes(&self, target: Target) -> Result<(Vec<usize>, Vec<f64>)> {
        match target {
            Target::Scenario => {
                let k = self.labels.iter().max().map_or(0, |m| m + 1);
                Ok((self.labels.clone(), (0..k).map(|v| v as f64).collect()))
            }
            Target::Mu1 | Target::Mu2 => {
                let col = if target == Target::Mu1 { 0 } else { 1 };
                let grid = &self.meta.grid_values;
                let y = self
                    .targets
                    .iter()
                    .map(|t| {
                        grid.iter().position(|&g| g == t[col]).ok_or_else(|| {
                            Error::Input(format!("{target} value {} is not a grid level", t[col]))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((y, grid.clone()))
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for id in &self.gauge_ids {
            let _ = write!(s, "gauge_{id},");
        }
        s.push_str("mu1,mu2,label,weight\n");
        for i in 0..self.n() {
            for v in self.row(i) {
                let _ = write!(s, "{v:.16e},");
            }
            let t = self.targets[i];
            let _ = writeln!(s, "{:.16e},{:.16e},{},{:.16e}", t[0], t[1], self.labels[i], self.weights[i]);
        }
        s
    }

    pub fn from_csv(text: &str, meta: DatasetMeta) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[cols.len() - 4..] != ["mu1", "mu2", "label", "weight"] {
            return Err(Error::Parse("dataset header must end with mu1,mu2,label,weight".into()));
        }
        let gauge_ids = cols[..cols.len() - 4]
            .iter()
            .map(|c| {
                c.strip_prefix("gauge_")
                    .and_then(|id| id.parse::<u32>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad feature column `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = gauge_ids.len();
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let mut ds = Dataset {
            gauge_ids,
            x: Vec::new(),
            labels: Vec::new(),
            targets: Vec::new(),
            weights: Vec::new(),
            meta,
        };
        for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != p + 4 {
                return Err(Error::Parse(format!("row {} has {} fields, expected {}", ln + 2, f.len(), p + 4)));
            }
            for v in &f[..p] {
                ds.x.push(num(v)?);
            }
            ds.targets.push([num(f[p])?, num(f[p + 1])?]);
            ds.labels.push(
                f[p + 2]
                    .parse()
                    .map_err(|e| Error::Parse(format!("label `{}`: {e}", f[p + 2])))?,
            );
            ds.weights.push(num(f[p + 3])?);
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Writes `<path>` (CSV) and its `<path>.meta.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path(path))?)?;
        let ds = Self::from_csv(&std::fs::read_to_string(path)?, meta)?;
        if ds.gauge_ids != ds.meta.layout.usable_ids() {
            return Err(Error::Input("dataset columns disagree with the layout in its metadata".into()));
        }
        Ok(ds)
    }
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Stratified random split by library label. Returns `(train, test)`, each
/// keeping the original row order.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(&ds.labels, test_fraction, seed)?;
    Ok((ds.select(&train), ds.select(&test)))
}

pub fn split_indices(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Domain(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_label[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut rows) in by_label.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::Stratification(format!(
                "label {label} has {} row(s); at least 2 are needed",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
