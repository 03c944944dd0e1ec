//! Shared test support: a monolithic stacked model that composes the
//! edge encoders, the server VAE, and the edge decoders into one network
//! and trains it with plain simultaneous SGD. It is the reference the
//! split protocol must match parameter-for-parameter.

use splitvae::nn::{
    bc_loss, bc_loss_grad, kl_loss, kl_loss_grad, reparametrize_backward,
    reparametrize_with_noise, KlForm, LatentStats, MlpStack,
};
use splitvae::numerics::{RngStream, Tensor};
use splitvae::protocol::{EdgeAgent, ServerAgent, TrainConfig};
use splitvae::transport::{tensor_concat, tensor_split};

pub struct LearningRates {
    pub edge_encoder: f64,
    pub edge_decoder: f64,
    pub server_encoder: f64,
    pub server_decoder: f64,
}

impl LearningRates {
    pub fn from_config(config: &TrainConfig) -> Self {
        LearningRates {
            edge_encoder: config.lr_edge_encoder,
            edge_decoder: config.lr_edge_decoder,
            server_encoder: config.lr_server_encoder,
            server_decoder: config.lr_server_decoder,
        }
    }
}

/// Signals produced by one monolithic backward pass, for comparing the
/// split protocol's transported tensors. Not every test target reads
/// every field.
#[allow(dead_code)]
pub struct StepSignals {
    pub loss: f64,
    /// Gradient at each edge decoder input (the gathered cut error).
    pub decoder_input_errors: Vec<Tensor>,
    /// Gradient at each edge encoder output (the scattered input error).
    pub encoder_output_errors: Vec<Tensor>,
}

#[derive(Clone)]
pub struct MonolithicModel {
    pub edge_encoders: Vec<MlpStack>,
    pub edge_decoders: Vec<MlpStack>,
    pub server_encoder: MlpStack,
    pub server_decoder: MlpStack,
    pub latent_dim: usize,
    pub dims: Vec<usize>,
    pub kl_form: KlForm,
}

impl MonolithicModel {
    pub fn from_agents(edges: &[EdgeAgent], server: &ServerAgent, kl_form: KlForm) -> Self {
        MonolithicModel {
            edge_encoders: edges.iter().map(|e| e.encoder.clone()).collect(),
            edge_decoders: edges.iter().map(|e| e.decoder.clone()).collect(),
            server_encoder: server.encoder.clone(),
            server_decoder: server.decoder.clone(),
            latent_dim: server.latent_dim,
            dims: server.dims.clone(),
            kl_form,
        }
    }

    /// Pure forward evaluation of the total loss (per-edge mean binary
    /// cross-entropies plus divergence) with frozen noise. Not every
    /// test target drives it.
    #[allow(dead_code)]
    pub fn loss(&self, batches: &[Tensor], noise: &Tensor) -> f64 {
        let embeddings: Vec<Tensor> = self
            .edge_encoders
            .iter()
            .zip(batches)
            .map(|(enc, b)| enc.infer(b).unwrap())
            .collect();
        let joined = tensor_concat(&embeddings).unwrap();
        let head = self.server_encoder.infer(&joined).unwrap();
        let mut stats = LatentStats::from_encoder_output(&head, self.latent_dim).unwrap();
        let z = reparametrize_with_noise(&mut stats, noise.clone()).unwrap();
        let estimate = self.server_decoder.infer(&z).unwrap();
        let parts = tensor_split(&estimate, &self.dims).unwrap();
        let mut total = kl_loss(&stats, self.kl_form);
        for ((dec, part), batch) in self.edge_decoders.iter().zip(&parts).zip(batches) {
            let reconstruction = dec.infer(part).unwrap();
            total += bc_loss(&reconstruction, batch).unwrap();
        }
        total
    }

    /// One simultaneous SGD step over every parameter with frozen noise.
    /// Gradients accumulate at the latent head the way a monolithic
    /// autodiff pass would, then flow to the leaves.
    pub fn sgd_step(
        &mut self,
        batches: &[Tensor],
        noise: &Tensor,
        rates: &LearningRates,
    ) -> StepSignals {
        // Forward with caches.
        let embeddings: Vec<Tensor> = self
            .edge_encoders
            .iter_mut()
            .zip(batches)
            .map(|(enc, b)| enc.forward(b).unwrap())
            .collect();
        let joined = tensor_concat(&embeddings).unwrap();
        let head = self.server_encoder.forward(&joined).unwrap();
        let mut stats = LatentStats::from_encoder_output(&head, self.latent_dim).unwrap();
        let z = reparametrize_with_noise(&mut stats, noise.clone()).unwrap();
        let estimate = self.server_decoder.forward(&z).unwrap();
        let parts = tensor_split(&estimate, &self.dims).unwrap();
        let reconstructions: Vec<Tensor> = self
            .edge_decoders
            .iter_mut()
            .zip(&parts)
            .map(|(dec, p)| dec.forward(p).unwrap())
            .collect();

        let mut loss = kl_loss(&stats, self.kl_form);
        for (rec, batch) in reconstructions.iter().zip(batches) {
            loss += bc_loss(rec, batch).unwrap();
        }

        // Backward: edge decoders to the cut.
        let mut decoder_input_errors = Vec::with_capacity(self.dims.len());
        let mut edge_decoder_grads = Vec::with_capacity(self.dims.len());
        for ((dec, rec), batch) in self
            .edge_decoders
            .iter_mut()
            .zip(&reconstructions)
            .zip(batches)
        {
            let grad = bc_loss_grad(rec, batch).unwrap();
            let (input_error, grads) = dec.backward(&grad).unwrap();
            decoder_input_errors.push(input_error);
            edge_decoder_grads.push(grads);
        }

        // Server decoder, then both head routes summed at the node.
        let joined_error = tensor_concat(&decoder_input_errors).unwrap();
        let (dz, server_decoder_grads) = self.server_decoder.backward(&joined_error).unwrap();
        let (d_mean_bc, d_log_std_bc) = reparametrize_backward(&stats, &dz).unwrap();
        let (d_mean_kl, d_log_std_kl) = kl_loss_grad(&stats, self.kl_form);
        let head_grad = tensor_concat(&[
            d_mean_bc.add(&d_mean_kl).unwrap(),
            d_log_std_bc.add(&d_log_std_kl).unwrap(),
        ])
        .unwrap();
        let (input_error, server_encoder_grads) =
            self.server_encoder.backward(&head_grad).unwrap();
        let encoder_output_errors = tensor_split(&input_error, &self.dims).unwrap();

        // Edge encoders to the leaves.
        let mut edge_encoder_grads = Vec::with_capacity(self.dims.len());
        for (enc, err) in self.edge_encoders.iter_mut().zip(&encoder_output_errors) {
            let (_, grads) = enc.backward(err).unwrap();
            edge_encoder_grads.push(grads);
        }

        // Simultaneous update with per-section learning rates.
        for (dec, grads) in self.edge_decoders.iter_mut().zip(&edge_decoder_grads) {
            dec.apply_step(grads, rates.edge_decoder).unwrap();
        }
        self.server_decoder
            .apply_step(&server_decoder_grads, rates.server_decoder)
            .unwrap();
        self.server_encoder
            .apply_step(&server_encoder_grads, rates.server_encoder)
            .unwrap();
        for (enc, grads) in self.edge_encoders.iter_mut().zip(&edge_encoder_grads) {
            enc.apply_step(grads, rates.edge_encoder).unwrap();
        }

        StepSignals {
            loss,
            decoder_input_errors,
            encoder_output_errors,
        }
    }
}

pub fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Uniform [0.02, 0.98] silo of the given shape, seeded.
pub fn uniform_silo(seed: u64, rows: usize, width: usize) -> Tensor {
    let mut rng = RngStream::new(seed, 1000);
    rng.uniform(0.02, 0.98, &[rows, width])
}
