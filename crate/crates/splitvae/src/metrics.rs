//! Scenario-quality metrics: Fréchet distance between Gaussian fits,
//! energy score, RMSE over mean-sorted rows, per-dimension CRPS in its
//! energy form, and the centroid/autocorrelation diagnostics, plus
//! mean/std aggregation over repeated generation runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean_and_cov, psd_matrix_sqrt, Tensor};

/// Sign convention for the covariance trace term. `Standard` adds the
/// trace (a true distance, never negative); `SubtractedTrace` flips its
/// sign and can go negative.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FidForm {
    Standard,
    SubtractedTrace,
}

/// Cached statistics for the reference side of repeated FID evaluations.
pub struct FidReference {
    mean: Tensor,
    cov: Tensor,
    cov_sqrt: Tensor,
}

impl FidReference {
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (mean, cov) = mean_and_cov(x)?;
        let cov_sqrt = psd_matrix_sqrt(&cov)?;
        Ok(FidReference {
            mean,
            cov,
            cov_sqrt,
        })
    }

    fn distance(&self, y: &Tensor, form: FidForm) -> Result<f64> {
        let (mean_y, cov_y) = mean_and_cov(y)?;
        if mean_y.len() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "fid widths {} vs {}",
                self.mean.len(),
                mean_y.len()
            )));
        }
        let mean_gap: f64 = self
            .mean
            .data()
            .iter()
            .zip(mean_y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        // The cross term uses the symmetric conjugation
        // sqrt(Sx) Sy sqrt(Sx), whose root has the same trace as
        // (Sx Sy)^(1/2) but is safely symmetric PSD.
        let conjugated = self.cov_sqrt.matmul(&cov_y)?.matmul(&self.cov_sqrt)?;
        let cross = psd_matrix_sqrt(&conjugated)?;
        let n = self.mean.len();
        let mut trace = 0.0;
        for i in 0..n {
            trace += self.cov.get(i, i) + cov_y.get(i, i) - 2.0 * cross.get(i, i);
        }
        let value = match form {
            FidForm::Standard => (mean_gap + trace).max(0.0),
            FidForm::SubtractedTrace => mean_gap - trace,
        };
        if !value.is_finite() {
            return Err(Error::Data("non-finite covariance in fid".into()));
        }
        Ok(value)
    }
}

/// Fréchet distance between Gaussian fits of the two samples.
pub fn fid(x: &Tensor, y: &Tensor) -> Result<f64> {
    FidReference::fit(x)?.distance(y, FidForm::Standard)
}

pub fn fid_with_form(x: &Tensor, y: &Tensor, form: FidForm) -> Result<f64> {
    FidReference::fit(x)?.distance(y, form)
}

fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Two-term energy statistic: mean cross distance minus half the mean
/// within-`x` distance (no y-y term; as such it is not a metric and only
/// finiteness is guaranteed).
pub fn energy_score(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (m1, d) = x.dims2()?;
    let (m2, d2) = y.dims2()?;
    if d != d2 {
        return Err(Error::Dimension(format!("energy score widths {} vs {}", d, d2)));
    }
    if m1 == 0 || m2 == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut cross = 0.0;
    for i in 0..m1 {
        for j in 0..m2 {
            cross += row_distance(x.row(i), y.row(j));
        }
    }
    let mut within = 0.0;
    for i in 0..m1 {
        for j in (i + 1)..m1 {
            within += row_distance(x.row(i), x.row(j));
        }
    }
    // Pairs (i, j) and (j, i) contribute equally; diagonal is zero.
    let value = cross / (m1 as f64 * m2 as f64) - within / (m1 as f64 * m1 as f64);
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite energy score".into()));
    }
    Ok(value)
}

/// Sort rows by mean (ties broken by content) so the pairing is
/// deterministic and permutation-invariant; the absolute value depends
/// on this convention.
fn sorted_row_indices(data: &Tensor) -> Vec<usize> {
    let (m, _) = data.dims2().unwrap_or((0, 0));
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| {
        let ra = data.row(a);
        let rb = data.row(b);
        let ma: f64 = ra.iter().sum();
        let mb: f64 = rb.iter().sum();
        ma.partial_cmp(&mb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                for (x, y) in ra.iter().zip(rb) {
                    match x.partial_cmp(y) {
                        Some(std::cmp::Ordering::Equal) | None => continue,
                        Some(ord) => return ord,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    idx
}

/// Root-mean-square error over the first `k = min(m1, m2)` rows after
/// sorting both sets by row mean.
pub fn rmse(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (m1, d) = x.dims2()?;
    let (m2, d2) = y.dims2()?;
    if d != d2 {
        return Err(Error::Dimension(format!("rmse widths {} vs {}", d, d2)));
    }
    let k = m1.min(m2);
    if k == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let xi = sorted_row_indices(x);
    let yi = sorted_row_indices(y);
    let mut acc = 0.0;
    for i in 0..k {
        for (a, b) in x.row(xi[i]).iter().zip(y.row(yi[i])) {
            acc += (a - b) * (a - b);
        }
    }
    Ok((acc / (k * d) as f64).sqrt())
}

/// Per-dimension continuous ranked probability score of the generated
/// ensemble against each observation, averaged over observations and
/// dimensions. Uses the exact energy identity
/// `mean|g - y| - mean|g - g'| / 2` per scalar dimension.
pub fn crps(generated: &Tensor, observed: &Tensor) -> Result<f64> {
    let (m2, d) = generated.dims2()?;
    let (m, d2) = observed.dims2()?;
    if d != d2 {
        return Err(Error::Dimension(format!("crps widths {} vs {}", d, d2)));
    }
    if m2 == 0 || m == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    let mut column = vec![0.0; m2];
    for j in 0..d {
        for (i, v) in column.iter_mut().enumerate() {
            *v = generated.get(i, j);
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Prefix sums over the sorted ensemble for O(log) point queries.
        let mut prefix = vec![0.0; m2 + 1];
        for (i, &v) in column.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        // Unordered pairwise gap sum via the sorted identity; dividing
        // by m2^2 equals the ordered double sum over 2*m2^2.
        let mut pair_sum = 0.0;
        for (i, &v) in column.iter().enumerate() {
            pair_sum += (2.0 * i as f64 + 1.0 - m2 as f64) * v;
        }
        let pair_term = pair_sum / (m2 as f64 * m2 as f64);

        for i in 0..m {
            let y = observed.get(i, j);
            let pos = column.partition_point(|&g| g < y);
            let below = y * pos as f64 - prefix[pos];
            let above = (prefix[m2] - prefix[pos]) - y * (m2 - pos) as f64;
            let abs_term = (below + above) / m2 as f64;
            total += abs_term - pair_term;
        }
    }
    Ok(total / (m * d) as f64)
}

/// Mean over nodes at each time point.
pub fn centroid_series(data: &Tensor) -> Result<Tensor> {
    data.col_means()
}

/// Normalized autocorrelation of a series at lags `0..max_lag`.
#[derive(Clone, Debug)]
pub struct Autocorrelation {
    pub values: Tensor,
    pub degenerate: bool,
}

pub fn autocorrelation(series: &Tensor, max_lag: usize) -> Result<Autocorrelation> {
    let t = series.len();
    if series.shape().len() != 1 {
        return Err(Error::Dimension(format!(
            "autocorrelation expects a 1-d series, got {:?}",
            series.shape()
        )));
    }
    if max_lag >= t {
        return Err(Error::Dimension(format!(
            "max_lag {} must be below series length {}",
            max_lag, t
        )));
    }
    let s = series.data();
    let mean = s.iter().sum::<f64>() / t as f64;
    let denom: f64 = s.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return Ok(Autocorrelation {
            values: Tensor::zeros(&[max_lag]),
            degenerate: true,
        });
    }
    let mut values = Vec::with_capacity(max_lag);
    for lag in 0..max_lag {
        let mut acc = 0.0;
        for i in 0..t - lag {
            acc += (s[i] - mean) * (s[i + lag] - mean);
        }
        values.push(acc / denom);
    }
    Ok(Autocorrelation {
        values: Tensor::new(vec![max_lag], values)?,
        degenerate: false,
    })
}

/// Mean and standard deviation of one metric over repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
}

fn stat(values: &[f64]) -> MetricStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricStat {
        mean,
        std: var.sqrt(),
    }
}

/// FID/ES/RMSE/CRPS means and standard deviations over repeated
/// generation runs against a fixed observed set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: MetricStat,
    pub es: MetricStat,
    pub rmse: MetricStat,
    pub crps: MetricStat,
    pub runs: usize,
}

impl MetricReport {
    /// Evaluate `runs` generated samples produced by `generate(run)`.
    pub fn collect(
        observed: &Tensor,
        runs: usize,
        mut generate: impl FnMut(usize) -> Result<Tensor>,
    ) -> Result<MetricReport> {
        if runs == 0 {
            return Err(Error::Config("metric report needs at least one run".into()));
        }
        let reference = FidReference::fit(observed)?;
        let mut fids = Vec::with_capacity(runs);
        let mut ess = Vec::with_capacity(runs);
        let mut rmses = Vec::with_capacity(runs);
        let mut crpss = Vec::with_capacity(runs);
        for run in 0..runs {
            let generated = generate(run)?;
            fids.push(reference.distance(&generated, FidForm::Standard)?);
            ess.push(energy_score(observed, &generated)?);
            rmses.push(rmse(observed, &generated)?);
            crpss.push(crps(&generated, observed)?);
        }
        Ok(MetricReport {
            fid: stat(&fids),
            es: stat(&ess),
            rmse: stat(&rmses),
            crps: stat(&crpss),
            runs,
        })
    }

    pub fn rows(&self) -> [(&'static str, MetricStat); 4] {
        [
            ("fid", self.fid),
            ("es", self.es),
            ("rmse", self.rmse),
            ("crps", self.crps),
        ]
    }
}

/// Write `(method, metric, mean, std, runs)` rows for several methods.
pub fn write_report_csv<W: Write>(out: &mut W, reports: &[(&str, &MetricReport)]) -> Result<()> {
    writeln!(out, "method,metric,mean,std,runs")?;
    for (method, report) in reports {
        for (metric, stat) in report.rows() {
            writeln!(
                out,
                "{},{},{},{},{}",
                method, metric, stat.mean, stat.std, report.runs
            )?;
        }
    }
    Ok(())
}
