//! Data handling: a synthetic spatiotemporal generator with known ground
//! truth, CSV ingestion, min-max normalization to [0, 1], and feature
//! partitioning into per-rank silos (uniform or explicit, heterogeneous
//! widths allowed).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// How the feature axis is divided across edge ranks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiloSpec {
    Uniform(usize),
    Explicit(Vec<usize>),
}

impl FromStr for SiloSpec {
    type Err = Error;

    /// Accepts `uniform:3` or an explicit width list like `4,7,9`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(n) = s.strip_prefix("uniform:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Config(format!("bad silo count in '{}'", s)))?;
            if n == 0 {
                return Err(Error::Config("silo count must be positive".into()));
            }
            return Ok(SiloSpec::Uniform(n));
        }
        let dims: std::result::Result<Vec<usize>, _> =
            s.split(',').map(|d| d.trim().parse::<usize>()).collect();
        match dims {
            Ok(dims) if !dims.is_empty() && dims.iter().all(|&d| d > 0) => {
                Ok(SiloSpec::Explicit(dims))
            }
            _ => Err(Error::Config(format!(
                "bad silo spec '{}': expected 'uniform:N' or a list like '4,7,9'",
                s
            ))),
        }
    }
}

/// Assignment of contiguous feature blocks to edge ranks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiloMap {
    dims: Vec<usize>,
}

impl SiloMap {
    pub fn n_edges(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_features(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Column offset of a rank's block (ranks are 1-based on the wire,
    /// 0-based here).
    pub fn offset(&self, edge_index: usize) -> usize {
        self.dims[..edge_index].iter().sum()
    }

    /// Slice a data matrix into per-rank silos, in rank order.
    pub fn partition(&self, data: &Tensor) -> Result<Vec<Tensor>> {
        let (_, d) = data.dims2()?;
        if d != self.total_features() {
            return Err(Error::Dimension(format!(
                "silo map covers {} features, data has {}",
                self.total_features(),
                d
            )));
        }
        let mut silos = Vec::with_capacity(self.dims.len());
        let mut offset = 0;
        for &w in &self.dims {
            silos.push(data.slice_cols(offset, w)?);
            offset += w;
        }
        Ok(silos)
    }
}

/// Build a silo map over `d` features. Uniform splits give the remainder
/// to the lowest ranks: d=9 over 2 edges is [5, 4].
pub fn partition_silos(d: usize, spec: &SiloSpec) -> Result<SiloMap> {
    match spec {
        SiloSpec::Uniform(n) => {
            if *n == 0 || *n > d {
                return Err(Error::Config(format!(
                    "cannot split {} features over {} edges",
                    d, n
                )));
            }
            let base = d / n;
            let remainder = d % n;
            let dims = (0..*n)
                .map(|i| if i < remainder { base + 1 } else { base })
                .collect();
            Ok(SiloMap { dims })
        }
        SiloSpec::Explicit(dims) => {
            let sum: usize = dims.iter().sum();
            if sum != d {
                return Err(Error::Config(format!(
                    "explicit silo dims sum to {}, data has {} features",
                    sum, d
                )));
            }
            Ok(SiloMap { dims: dims.clone() })
        }
    }
}

/// Per-feature min/max from training data. Constant features are flagged
/// and map to 0.5 under normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormStats {
    pub fn fit(data: &Tensor) -> Result<Self> {
        let (m, d) = data.dims2()?;
        if m == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for r in 0..m {
            for (c, &v) in data.row(r).iter().enumerate() {
                mins[c] = mins[c].min(v);
                maxs[c] = maxs[c].max(v);
            }
        }
        let constant = mins.iter().zip(&maxs).map(|(lo, hi)| lo == hi).collect();
        Ok(NormStats {
            mins,
            maxs,
            constant,
        })
    }

    pub fn width(&self) -> usize {
        self.mins.len()
    }
}

/// Min-max normalize each feature to [0, 1] with the given stats, or fit
/// fresh stats when none are supplied.
pub fn normalize(data: &Tensor, stats: Option<&NormStats>) -> Result<(Tensor, NormStats)> {
    let (m, d) = data.dims2()?;
    let stats = match stats {
        Some(s) => {
            if s.width() != d {
                return Err(Error::Dimension(format!(
                    "normalization stats cover {} features, data has {}",
                    s.width(),
                    d
                )));
            }
            s.clone()
        }
        None => NormStats::fit(data)?,
    };
    let mut out = Vec::with_capacity(m * d);
    for r in 0..m {
        for (c, &v) in data.row(r).iter().enumerate() {
            if stats.constant[c] {
                out.push(0.5);
            } else {
                out.push((v - stats.mins[c]) / (stats.maxs[c] - stats.mins[c]));
            }
        }
    }
    Ok((Tensor::new(vec![m, d], out)?, stats))
}

/// Invert [`normalize`]. Constant features map back to their single value.
pub fn denormalize(data: &Tensor, stats: &NormStats) -> Result<Tensor> {
    let (m, d) = data.dims2()?;
    if stats.width() != d {
        return Err(Error::Dimension(format!(
            "normalization stats cover {} features, data has {}",
            stats.width(),
            d
        )));
    }
    let mut out = Vec::with_capacity(m * d);
    for r in 0..m {
        for (c, &v) in data.row(r).iter().enumerate() {
            if stats.constant[c] {
                out.push(stats.mins[c]);
            } else {
                out.push(stats.mins[c] + v * (stats.maxs[c] - stats.mins[c]));
            }
        }
    }
    Tensor::new(vec![m, d], out)
}

/// Configuration of the synthetic spatiotemporal generator.
///
/// Every sample is one "day": node `i`'s horizon is a shared diurnal
/// sinusoid with a node-specific phase offset plus Gaussian noise whose
/// inter-node correlation is `rho^|i-j|` (no temporal noise correlation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub nodes: usize,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub rho: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub noise_sd: f64,
}

impl SynthConfig {
    pub fn new(nodes: usize, horizon: usize, samples: usize, seed: u64, rho: f64) -> Self {
        SynthConfig {
            nodes,
            horizon,
            samples,
            seed,
            rho,
            amplitude: 0.35,
            offset: 0.5,
            noise_sd: 0.08,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.horizon == 0 {
            return Err(Error::Config("nodes and horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must be in [0, 1), got {}",
                self.rho
            )));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Exact moments of the generated distribution, for oracle checks.
/// Feature `(i, t)` lives at column `i * horizon + t`.
#[derive(Clone, Debug)]
pub struct SynthDescriptor {
    pub nodes: usize,
    pub horizon: usize,
    pub mean: Tensor,
    pub covariance: Tensor,
}

/// Generate `samples x (nodes * horizon)` data plus the exact moments
/// used. Bitwise reproducible for a fixed config.
pub fn synth_generate(config: &SynthConfig) -> Result<(Tensor, SynthDescriptor)> {
    config.validate()?;
    let nodes = config.nodes;
    let horizon = config.horizon;
    let d = nodes * horizon;

    // Deterministic per-node phase offsets spread over the day.
    let phases: Vec<f64> = (0..nodes)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / nodes as f64)
        .collect();
    let mut mean = vec![0.0; d];
    for i in 0..nodes {
        for t in 0..horizon {
            let angle = 2.0 * std::f64::consts::PI * t as f64 / horizon as f64 + phases[i];
            mean[i * horizon + t] = config.offset + config.amplitude * angle.sin();
        }
    }

    // Spatial noise factor: C[i][j] = sd^2 * rho^|i-j|, same at every
    // time step, independent across time.
    let mut node_cov = Tensor::zeros(&[nodes, nodes]);
    for i in 0..nodes {
        for j in 0..nodes {
            let v = config.noise_sd * config.noise_sd * config.rho.powi((i as i32 - j as i32).abs());
            node_cov.set(i, j, v);
        }
    }
    let factor = crate::numerics::psd_matrix_sqrt(&node_cov)?;

    let mut rng = RngStream::new(config.seed, 0);
    let mut data = vec![0.0; config.samples * d];
    for s in 0..config.samples {
        for t in 0..horizon {
            let draw = rng.standard_normal(&[1, nodes]);
            let correlated = draw.matmul(&factor)?;
            for i in 0..nodes {
                data[s * d + i * horizon + t] = mean[i * horizon + t] + correlated.data()[i];
            }
        }
    }

    let mut covariance = Tensor::zeros(&[d, d]);
    for i in 0..nodes {
        for j in 0..nodes {
            let c = node_cov.get(i, j);
            for t in 0..horizon {
                covariance.set(i * horizon + t, j * horizon + t, c);
            }
        }
    }

    Ok((
        Tensor::new(vec![config.samples, d], data)?,
        SynthDescriptor {
            nodes,
            horizon,
            mean: Tensor::new(vec![d], mean)?,
            covariance,
        },
    ))
}

/// Feature names for synthetic data: `n{node}_t{step}`.
pub fn synth_feature_names(nodes: usize, horizon: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(nodes * horizon);
    for i in 0..nodes {
        for t in 0..horizon {
            names.push(format!("n{}_t{}", i, t));
        }
    }
    names
}

/// Load a rectangular numeric CSV with a header row.
pub fn load_csv(path: &Path) -> Result<(Tensor, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {}", path.display(), e)))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            col: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            message: "empty file".into(),
        });
    }
    let width = names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: r + 1,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row: r + 1,
                col: record.len(),
                message: format!("expected {} fields, got {}", width, record.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row: r + 1,
                col: c + 1,
                message: format!("not a number: '{}'", field),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 0,
            message: "no data rows".into(),
        });
    }
    Ok((Tensor::from_rows(&rows)?, names))
}

/// Render a matrix as CSV text with the given header names. Values use
/// the shortest representation that parses back bitwise-identically.
pub fn csv_string(data: &Tensor, names: &[String]) -> Result<String> {
    let (m, d) = data.dims2()?;
    if names.len() != d {
        return Err(Error::Dimension(format!(
            "{} header names for {} columns",
            names.len(),
            d
        )));
    }
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..m {
        for (c, v) in data.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", v);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Write a matrix to a CSV file, header included.
pub fn write_csv(path: &Path, data: &Tensor, names: &[String]) -> Result<()> {
    std::fs::write(path, csv_string(data, names)?)?;
    Ok(())
}
