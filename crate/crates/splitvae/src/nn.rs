//! Dense feed-forward stacks with explicit, composable forward and
//! backward passes, binary cross-entropy and Gaussian-prior divergence
//! losses, the reparametrized latent sampler, and a plain gradient-step
//! optimizer. Everything is deterministic given an [`RngStream`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Clamp bounds for encoder log standard deviations; keeps `exp` finite
/// and the standard deviation strictly positive.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 20.0;

/// Clamp applied to predictions before logarithms in the cross-entropy.
const PRED_EPS: f64 = 1e-7;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Tensor,
    pre_activation: Tensor,
}

/// One affine layer plus activation. Weight shape is `in x out`, biases
/// have length `out`; both are immutable after construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Tensor,
    biases: Tensor,
    activation: Activation,
    #[serde(skip)]
    cache: Option<LayerCache>,
}

/// Gradients for one layer, in the same shapes as its parameters.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, biases: Tensor, activation: Activation) -> Result<Self> {
        let (_, out) = weights.dims2()?;
        if biases.shape() != [out] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not match output width {}",
                biases.shape(),
                out
            )));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
            cache: None,
        })
    }

    /// Fan-based uniform init: weights in ±sqrt(6/(in+out)), zero biases.
    pub fn init(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let bound = (6.0 / (input_dim + output_dim) as f64).sqrt();
        DenseLayer {
            weights: rng.uniform(-bound, bound, &[input_dim, output_dim]),
            biases: Tensor::zeros(&[output_dim]),
            activation,
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn biases(&self) -> &Tensor {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut Tensor {
        &mut self.biases
    }

    fn affine(&self, input: &Tensor) -> Result<Tensor> {
        let mut pre = input.matmul(&self.weights)?;
        let (batch, out) = pre.dims2()?;
        let biases = self.biases.data().to_vec();
        for r in 0..batch {
            let row = &mut pre.data_mut()[r * out..(r + 1) * out];
            for (v, b) in row.iter_mut().zip(&biases) {
                *v += b;
            }
        }
        Ok(pre)
    }

    /// Forward pass that records the cache needed by `backward`.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let pre = self.affine(input)?;
        let out = pre.map(|z| self.activation.apply(z));
        self.cache = Some(LayerCache {
            input: input.clone(),
            pre_activation: pre,
        });
        Ok(out)
    }

    /// Cache-free forward pass for inference.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.affine(input)?.map(|z| self.activation.apply(z)))
    }

    fn backward_from_cache(
        &self,
        cache: &LayerCache,
        output_grad: &Tensor,
    ) -> Result<(Tensor, LayerGrads)> {
        if output_grad.shape() != cache.pre_activation.shape() {
            return Err(Error::Dimension(format!(
                "output grad shape {:?} does not match cached forward {:?}",
                output_grad.shape(),
                cache.pre_activation.shape()
            )));
        }
        let pre_grad =
            output_grad.hadamard(&cache.pre_activation.map(|z| self.activation.derivative(z)))?;
        let weight_grad = cache.input.transpose()?.matmul(&pre_grad)?;
        let (batch, out) = pre_grad.dims2()?;
        let mut bias_grad = vec![0.0; out];
        for r in 0..batch {
            for (b, &g) in bias_grad.iter_mut().zip(pre_grad.row(r)) {
                *b += g;
            }
        }
        let input_grad = pre_grad.matmul(&self.weights.transpose()?)?;
        Ok((
            input_grad,
            LayerGrads {
                weights: weight_grad,
                biases: Tensor::new(vec![out], bias_grad)?,
            },
        ))
    }

    fn take_cache(&mut self) -> Result<LayerCache> {
        self.cache.take().ok_or_else(|| {
            Error::ProtocolOrder("layer backward called without a matching forward".into())
        })
    }
}

/// Ordered stack of dense layers; consecutive dimensions must chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpStack {
    layers: Vec<DenseLayer>,
}

impl MlpStack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("stack needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "layer dimensions do not chain: {} -> {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(MlpStack { layers })
    }

    /// Build a stack from layer widths, e.g. `[8, 64, 4]`, with the given
    /// hidden activation and a distinct output activation.
    pub fn init(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Dimension(
                "stack init needs at least two widths".into(),
            ));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let act = if i + 2 == widths.len() { output } else { hidden };
            layers.push(DenseLayer::init(pair[0], pair[1], act, rng));
        }
        MlpStack::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut current = input.clone();
        for layer in &mut self.layers {
            current = layer.forward(&current)?;
        }
        Ok(current)
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut current = input.clone();
        for layer in &self.layers {
            current = layer.infer(&current)?;
        }
        Ok(current)
    }

    /// Backward pass through the stack, consuming the forward caches.
    /// Returns the gradient at the stack input and per-layer parameter
    /// gradients (front to back).
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<(Tensor, Vec<LayerGrads>)> {
        let mut grads = vec![None; self.layers.len()];
        let mut current = output_grad.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let cache = layer.take_cache()?;
            let (input_grad, layer_grads) = layer.backward_from_cache(&cache, &current)?;
            grads[i] = Some(layer_grads);
            current = input_grad;
        }
        Ok((current, grads.into_iter().map(|g| g.unwrap()).collect()))
    }

    /// Backward pass that leaves the caches in place, so a second route
    /// can be propagated through the same forward pass.
    pub fn backward_retain(&self, output_grad: &Tensor) -> Result<(Tensor, Vec<LayerGrads>)> {
        let mut grads = vec![None; self.layers.len()];
        let mut current = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let cache = layer.cache.as_ref().ok_or_else(|| {
                Error::ProtocolOrder("layer backward called without a matching forward".into())
            })?;
            let (input_grad, layer_grads) = layer.backward_from_cache(cache, &current)?;
            grads[i] = Some(layer_grads);
            current = input_grad;
        }
        Ok((current, grads.into_iter().map(|g| g.unwrap()).collect()))
    }

    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            layer.cache = None;
        }
    }

    /// One SGD step over every layer: `p <- p - lr * g`.
    pub fn apply_step(&mut self, grads: &[LayerGrads], learning_rate: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} gradient sets for {} layers",
                grads.len(),
                self.layers.len()
            )));
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            sgd_step(&mut layer.weights, &g.weights, learning_rate)?;
            sgd_step(&mut layer.biases, &g.biases, learning_rate)?;
        }
        Ok(())
    }

    /// Flat view of all parameters, for checkpoint diffing and tests.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(layer.biases.data());
        }
        out
    }
}

/// Elementwise sum of two per-layer gradient lists.
pub fn add_grads(a: &[LayerGrads], b: &[LayerGrads]) -> Result<Vec<LayerGrads>> {
    if a.len() != b.len() {
        return Err(Error::Dimension("gradient list length mismatch".into()));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            Ok(LayerGrads {
                weights: x.weights.add(&y.weights)?,
                biases: x.biases.add(&y.biases)?,
            })
        })
        .collect()
}

/// `p <- p - lr * g`, elementwise.
pub fn sgd_step(params: &mut Tensor, grad: &Tensor, learning_rate: f64) -> Result<()> {
    if learning_rate <= 0.0 {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            learning_rate
        )));
    }
    if params.shape() != grad.shape() {
        return Err(Error::Dimension(format!(
            "sgd shapes {:?} vs {:?}",
            params.shape(),
            grad.shape()
        )));
    }
    for (p, g) in params.data_mut().iter_mut().zip(grad.data()) {
        *p -= learning_rate * g;
    }
    Ok(())
}

fn clamp_pred(p: f64) -> f64 {
    p.clamp(PRED_EPS, 1.0 - PRED_EPS)
}

fn check_bce_inputs(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "cross-entropy shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if target.data().iter().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::Data("cross-entropy target outside [0, 1]".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over every element (batch and feature).
pub fn bc_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_bce_inputs(pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_pred(p);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / pred.len() as f64)
}

/// Gradient of [`bc_loss`] with respect to the predictions.
pub fn bc_loss_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_bce_inputs(pred, target)?;
    let scale = 1.0 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_pred(p);
            scale * (p - t) / (p * (1.0 - p))
        })
        .collect();
    Tensor::new(pred.shape().to_vec(), data)
}

/// Which final term the latent divergence uses: the standard Gaussian
/// form squares the standard deviation; the alternate form keeps it
/// linear (and can go negative).
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlForm {
    #[default]
    Standard,
    Paper,
}

impl std::str::FromStr for KlForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(KlForm::Standard),
            "paper" => Ok(KlForm::Paper),
            other => Err(Error::Config(format!(
                "unknown kl form '{}', expected 'standard' or 'paper'",
                other
            ))),
        }
    }
}

/// Latent distribution parameters produced by a probabilistic encoder,
/// plus the noise draw of the matching reparametrization (cached for the
/// backward pass).
#[derive(Clone, Debug)]
pub struct LatentStats {
    mean: Tensor,
    log_std: Tensor,
    noise: Option<Tensor>,
}

impl LatentStats {
    pub fn new(mean: Tensor, log_std: Tensor) -> Result<Self> {
        if mean.shape() != log_std.shape() {
            return Err(Error::Dimension(format!(
                "latent stats shapes {:?} vs {:?}",
                mean.shape(),
                log_std.shape()
            )));
        }
        Ok(LatentStats {
            mean,
            log_std: log_std.map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            noise: None,
        })
    }

    /// Split a `B x 2s` encoder head output into mean and log-std halves.
    pub fn from_encoder_output(output: &Tensor, latent_dim: usize) -> Result<Self> {
        let (_, width) = output.dims2()?;
        if width != 2 * latent_dim {
            return Err(Error::Dimension(format!(
                "encoder head width {} does not hold 2x{} latent parameters",
                width, latent_dim
            )));
        }
        LatentStats::new(
            output.slice_cols(0, latent_dim)?,
            output.slice_cols(latent_dim, latent_dim)?,
        )
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn log_std(&self) -> &Tensor {
        &self.log_std
    }

    pub fn std(&self) -> Tensor {
        self.log_std.map(f64::exp)
    }

    pub fn noise(&self) -> Option<&Tensor> {
        self.noise.as_ref()
    }

    fn batch(&self) -> usize {
        self.mean.shape()[0]
    }
}

/// Batch-mean divergence of the latent distribution from the standard
/// normal prior, summed over latent dimensions.
pub fn kl_loss(stats: &LatentStats, form: KlForm) -> f64 {
    let batch = stats.batch() as f64;
    let std = stats.std();
    let total: f64 = stats
        .mean
        .data()
        .iter()
        .zip(stats.log_std.data())
        .zip(std.data())
        .map(|((&mu, &ls), &s)| {
            let last = match form {
                KlForm::Standard => s * s,
                KlForm::Paper => s,
            };
            -0.5 * (1.0 + 2.0 * ls - mu * mu - last)
        })
        .sum();
    total / batch
}

/// Analytic gradients of [`kl_loss`] with respect to the mean and the
/// log standard deviation.
pub fn kl_loss_grad(stats: &LatentStats, form: KlForm) -> (Tensor, Tensor) {
    let batch = stats.batch() as f64;
    let d_mean = stats.mean.scale(1.0 / batch);
    let d_log_std = stats.log_std.map(|ls| {
        let s = ls.exp();
        match form {
            KlForm::Standard => (s * s - 1.0) / batch,
            KlForm::Paper => (0.5 * s - 1.0) / batch,
        }
    });
    (d_mean, d_log_std)
}

/// Sample the latent vector `z = mean + std ⊙ noise` with fresh noise,
/// caching the noise for the backward pass.
pub fn reparametrize(stats: &mut LatentStats, rng: &mut RngStream) -> Result<Tensor> {
    let noise = rng.standard_normal(stats.mean.shape());
    reparametrize_with_noise(stats, noise)
}

/// Reparametrize with externally supplied noise (frozen-noise tests and
/// oracles).
pub fn reparametrize_with_noise(stats: &mut LatentStats, noise: Tensor) -> Result<Tensor> {
    if noise.shape() != stats.mean.shape() {
        return Err(Error::Dimension(format!(
            "noise shape {:?} vs latent shape {:?}",
            noise.shape(),
            stats.mean.shape()
        )));
    }
    let z = stats.mean.add(&stats.std().hadamard(&noise)?)?;
    stats.noise = Some(noise);
    Ok(z)
}

/// Chain rule through the reparametrization: gradients of the latent
/// sample with respect to the mean and log standard deviation.
pub fn reparametrize_backward(stats: &LatentStats, dz: &Tensor) -> Result<(Tensor, Tensor)> {
    let noise = stats.noise.as_ref().ok_or_else(|| {
        Error::ProtocolOrder("reparametrize_backward called before reparametrize".into())
    })?;
    if dz.shape() != stats.mean.shape() {
        return Err(Error::Dimension(format!(
            "dz shape {:?} vs latent shape {:?}",
            dz.shape(),
            stats.mean.shape()
        )));
    }
    let d_mean = dz.clone();
    let d_log_std = dz.hadamard(noise)?.hadamard(&stats.std())?;
    Ok((d_mean, d_log_std))
}

/// Loss decomposition for one batch or epoch; the total is always the
/// exact sum of the two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub bc_loss: f64,
    pub kl_loss: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(bc_loss: f64, kl_loss: f64) -> Self {
        LossReport {
            bc_loss,
            kl_loss,
            total: bc_loss + kl_loss,
        }
    }
}
