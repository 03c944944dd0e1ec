//! Centralized comparison methods: a conventional VAE trained on the
//! full concatenated data, and a Gaussian copula with empirical
//! marginals. Also the normal cdf/quantile pair both need, built on a
//! rational erf approximation accurate to double precision.

// Published approximation coefficients and high-precision reference
// values are kept verbatim, one digit past f64 where the sources print
// them.
#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    add_grads, bc_loss, bc_loss_grad, kl_loss, kl_loss_grad, reparametrize,
    reparametrize_backward, Activation, KlForm, LatentStats, LossReport, MlpStack,
};
use crate::numerics::{psd_matrix_sqrt, RngStream, Tensor};

// ---------------------------------------------------------------------
// Normal special functions
// ---------------------------------------------------------------------

// Rational approximations from W. J. Cody's SPECFUN erf, |rel err| in
// the 1e-16 range across all three branches.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const ONE_OVER_SQRT_PI: f64 = 0.5641895835477562869;

fn erfc_scaled_tail(y: f64) -> f64 {
    // erfc(y) * exp(y^2) for y > 0.46875.
    if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        (num + ERF_C[7]) / (den + ERF_D[7])
    } else {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        (ONE_OVER_SQRT_PI - r) / y
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf(x);
    }
    // Split exp(-y^2) to keep cancellation tiny (Cody's trick).
    let ysq = (y * 16.0).floor() / 16.0;
    let del = (y - ysq) * (y + ysq);
    let result = (-ysq * ysq).exp() * (-del).exp() * erfc_scaled_tail(y);
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        x * (num + ERF_A[3]) / (den + ERF_B[3])
    } else {
        let sign = x.signum();
        sign * (1.0 - erfc(y))
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Acklam's rational approximation for the normal quantile, refined by a
// Halley step against the cdf above.
const NQ_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const NQ_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const NQ_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const NQ_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Standard normal quantile (inverse cdf); absolute error well below
/// 1e-9 across (0, 1) after refinement.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(Error::Numeric(format!(
            "normal quantile needs p in (0, 1), got {}",
            p
        )));
    }
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((NQ_C[0] * q + NQ_C[1]) * q + NQ_C[2]) * q + NQ_C[3]) * q + NQ_C[4]) * q + NQ_C[5])
            / ((((NQ_D[0] * q + NQ_D[1]) * q + NQ_D[2]) * q + NQ_D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((NQ_A[0] * r + NQ_A[1]) * r + NQ_A[2]) * r + NQ_A[3]) * r + NQ_A[4]) * r + NQ_A[5]) * q
            / (((((NQ_B[0] * r + NQ_B[1]) * r + NQ_B[2]) * r + NQ_B[3]) * r + NQ_B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((NQ_C[0] * q + NQ_C[1]) * q + NQ_C[2]) * q + NQ_C[3]) * q + NQ_C[4]) * q + NQ_C[5])
            / ((((NQ_D[0] * q + NQ_D[1]) * q + NQ_D[2]) * q + NQ_D[3]) * q + 1.0)
    };
    // One Halley refinement step.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

// ---------------------------------------------------------------------
// Central VAE
// ---------------------------------------------------------------------

/// Training knobs for the centralized VAE baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub kl_form: KlForm,
}

impl CvaeConfig {
    pub fn new(seed: u64, latent_dim: usize) -> Self {
        CvaeConfig {
            epochs: 50,
            batch_size: 32,
            seed,
            latent_dim,
            hidden: 128,
            lr_encoder: 1e-2,
            lr_decoder: 1e-2,
            kl_form: KlForm::Standard,
        }
    }
}

/// Conventional VAE over the full concatenated feature space: encoder
/// ends in a mean/log-std head of width `2s`, decoder reconstructs in
/// (0, 1) through a sigmoid output.
#[derive(Clone, Debug)]
pub struct CentralVae {
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub latent_dim: usize,
    kl_form: KlForm,
    noise_rng: RngStream,
    trained: bool,
}

/// Stream ids carved out of the seed space so the baseline's init and
/// noise draws never collide with the split protocol's per-rank streams.
const CVAE_INIT_STREAM: u64 = 1 << 32;
const CVAE_NOISE_STREAM: u64 = (1 << 32) + 1;

impl CentralVae {
    pub fn new(input_dim: usize, config: &CvaeConfig) -> Result<Self> {
        if input_dim == 0 || config.latent_dim == 0 || config.hidden == 0 {
            return Err(Error::Config("cvae dimensions must be positive".into()));
        }
        let mut init = RngStream::new(config.seed, CVAE_INIT_STREAM);
        let encoder = MlpStack::init(
            &[input_dim, config.hidden, 2 * config.latent_dim],
            Activation::Relu,
            Activation::Identity,
            &mut init,
        )?;
        let decoder = MlpStack::init(
            &[config.latent_dim, config.hidden, input_dim],
            Activation::Relu,
            Activation::Sigmoid,
            &mut init,
        )?;
        Ok(CentralVae {
            encoder,
            decoder,
            latent_dim: config.latent_dim,
            kl_form: config.kl_form,
            noise_rng: RngStream::new(config.seed, CVAE_NOISE_STREAM),
            trained: false,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// One gradient step on a batch; returns the loss decomposition.
    /// Noise can be supplied for frozen-noise gradient checks.
    pub fn train_step(
        &mut self,
        batch: &Tensor,
        config: &CvaeConfig,
        noise: Option<Tensor>,
    ) -> Result<LossReport> {
        let head = self.encoder.forward(batch)?;
        let mut stats = LatentStats::from_encoder_output(&head, self.latent_dim)?;
        let z = match noise {
            Some(n) => crate::nn::reparametrize_with_noise(&mut stats, n)?,
            None => reparametrize(&mut stats, &mut self.noise_rng)?,
        };
        let reconstruction = self.decoder.forward(&z)?;

        let bc = bc_loss(&reconstruction, batch)?;
        let kl = kl_loss(&stats, self.kl_form);

        let recon_grad = bc_loss_grad(&reconstruction, batch)?;
        let (dz, decoder_grads) = self.decoder.backward(&recon_grad)?;
        let (d_mean_bc, d_log_std_bc) = reparametrize_backward(&stats, &dz)?;
        let head_grad_bc = crate::transport::tensor_concat(&[d_mean_bc, d_log_std_bc])?;
        let (_, encoder_grads_bc) = self.encoder.backward_retain(&head_grad_bc)?;

        let (d_mean_kl, d_log_std_kl) = kl_loss_grad(&stats, self.kl_form);
        let head_grad_kl = crate::transport::tensor_concat(&[d_mean_kl, d_log_std_kl])?;
        let (_, encoder_grads_kl) = self.encoder.backward(&head_grad_kl)?;

        self.decoder.apply_step(&decoder_grads, config.lr_decoder)?;
        let encoder_grads = add_grads(&encoder_grads_bc, &encoder_grads_kl)?;
        self.encoder.apply_step(&encoder_grads, config.lr_encoder)?;

        Ok(LossReport::new(bc, kl))
    }

    /// Train on data normalized to [0, 1]; returns the per-epoch loss
    /// series (batch means).
    pub fn train(&mut self, data: &Tensor, config: &CvaeConfig) -> Result<Vec<LossReport>> {
        let (rows, width) = data.dims2()?;
        if width != self.input_dim() {
            return Err(Error::Dimension(format!(
                "cvae expects width {}, data has {}",
                self.input_dim(),
                width
            )));
        }
        if config.batch_size == 0 || config.batch_size > rows {
            return Err(Error::Config(format!(
                "batch size {} invalid for {} rows",
                config.batch_size, rows
            )));
        }
        let batches = rows / config.batch_size;
        let mut series = Vec::with_capacity(config.epochs);
        for _epoch in 0..config.epochs {
            let mut bc_sum = 0.0;
            let mut kl_sum = 0.0;
            for b in 0..batches {
                let batch = data.slice_rows(b * config.batch_size, config.batch_size)?;
                let report = self.train_step(&batch, config, None)?;
                if !report.total.is_finite() {
                    return Err(Error::Numeric("cvae loss diverged".into()));
                }
                bc_sum += report.bc_loss;
                kl_sum += report.kl_loss;
            }
            series.push(LossReport::new(
                bc_sum / batches as f64,
                kl_sum / batches as f64,
            ));
        }
        self.trained = true;
        Ok(series)
    }

    /// Decode `count` scenarios from prior samples.
    pub fn generate(&self, count: usize, rng: &mut RngStream) -> Result<Tensor> {
        if !self.trained {
            return Err(Error::State("cvae has not been trained or loaded".into()));
        }
        let z = rng.standard_normal(&[count, self.latent_dim]);
        self.decoder.infer(&z)
    }
}

// ---------------------------------------------------------------------
// Gaussian copula
// ---------------------------------------------------------------------

/// Gaussian copula with empirical marginals: fit normal scores of the
/// per-feature ranks, estimate their correlation (repaired to PSD), and
/// sample by inverting the empirical cdfs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CopulaModel {
    /// Per-feature sorted training values (the empirical marginals).
    marginals: Vec<Vec<f64>>,
    /// Normal-score correlation matrix, unit diagonal, PSD.
    correlation: Tensor,
    /// Features with a single repeated value.
    degenerate: Vec<bool>,
    #[serde(skip)]
    factor: Option<Tensor>,
}

/// Midranks (average ranks for ties), 1-based.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

impl CopulaModel {
    /// Fit on raw data (rows = observations). Needs at least 10 rows.
    #[allow(clippy::needless_range_loop)]
    pub fn fit(data: &Tensor) -> Result<Self> {
        let (m, d) = data.dims2()?;
        if m < 10 {
            return Err(Error::InsufficientSamples { needed: 10, got: m });
        }
        let mut marginals = Vec::with_capacity(d);
        let mut degenerate = vec![false; d];
        let mut scores: Vec<Vec<f64>> = Vec::with_capacity(d);
        for c in 0..d {
            let column: Vec<f64> = (0..m).map(|r| data.get(r, c)).collect();
            let mut sorted = column.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            degenerate[c] = sorted[0] == sorted[m - 1];
            if degenerate[c] {
                scores.push(vec![0.0; m]);
            } else {
                let ranks = midranks(&column);
                let mut s = Vec::with_capacity(m);
                for r in ranks {
                    s.push(normal_quantile((r - 0.5) / m as f64)?);
                }
                scores.push(s);
            }
            marginals.push(sorted);
        }

        let mut correlation = Tensor::identity(d);
        for i in 0..d {
            for j in (i + 1)..d {
                let r = if degenerate[i] || degenerate[j] {
                    0.0
                } else {
                    pearson(&scores[i], &scores[j])
                };
                correlation.set(i, j, r);
                correlation.set(j, i, r);
            }
        }
        let correlation = repair_correlation(&correlation)?;
        Ok(CopulaModel {
            marginals,
            correlation,
            degenerate,
            factor: None,
        })
    }

    pub fn width(&self) -> usize {
        self.marginals.len()
    }

    pub fn correlation(&self) -> &Tensor {
        &self.correlation
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    fn ensure_factor(&mut self) -> Result<&Tensor> {
        if self.factor.is_none() {
            self.factor = Some(psd_matrix_sqrt(&self.correlation)?);
        }
        Ok(self.factor.as_ref().unwrap())
    }

    /// Invert one empirical cdf by linear interpolation between order
    /// statistics at plotting positions (i + 0.5) / m.
    fn invert_marginal(&self, feature: usize, u: f64) -> f64 {
        let sorted = &self.marginals[feature];
        let m = sorted.len();
        if self.degenerate[feature] {
            return sorted[0];
        }
        let pos = u * m as f64 - 0.5;
        if pos <= 0.0 {
            return sorted[0];
        }
        if pos >= (m - 1) as f64 {
            return sorted[m - 1];
        }
        let lower = pos.floor() as usize;
        let frac = pos - lower as f64;
        sorted[lower] + frac * (sorted[lower + 1] - sorted[lower])
    }

    /// Draw `count` joint samples in the original data units.
    pub fn sample(&mut self, count: usize, rng: &mut RngStream) -> Result<Tensor> {
        if self.marginals.is_empty() {
            return Err(Error::State("copula has not been fitted".into()));
        }
        let d = self.width();
        let factor = self.ensure_factor()?.clone();
        let draws = rng.standard_normal(&[count, d]);
        let correlated = draws.matmul(&factor)?;
        let mut out = Vec::with_capacity(count * d);
        for r in 0..count {
            for c in 0..d {
                let u = normal_cdf(correlated.get(r, c));
                out.push(self.invert_marginal(c, u));
            }
        }
        Tensor::new(vec![count, d], out)
    }
}

/// Clamp eigenvalues at zero and rescale back to a unit diagonal.
fn repair_correlation(matrix: &Tensor) -> Result<Tensor> {
    let repaired = psd_matrix_sqrt(matrix)?;
    let mut full = repaired.matmul(&repaired)?;
    let (d, _) = full.dims2()?;
    let scales: Vec<f64> = (0..d).map(|i| full.get(i, i).sqrt().max(1e-12)).collect();
    for i in 0..d {
        for j in 0..d {
            let v = full.get(i, j) / (scales[i] * scales[j]);
            full.set(i, j, v);
        }
    }
    for i in 0..d {
        full.set(i, i, 1.0);
    }
    Ok(full)
}
