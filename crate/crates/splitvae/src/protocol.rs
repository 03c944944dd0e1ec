//! The split training protocol: edge agents holding siloed data and a
//! plain autoencoder each, a server agent holding the variational
//! autoencoder over the concatenated embeddings, and the orchestration
//! that runs them as independent workers over the transport collectives.
//!
//! Per batch the fixed sequence is: every edge encodes and gathers its
//! embedding; the server encodes/reparametrizes/decodes and scatters the
//! reconstructed embeddings; every edge decodes, measures reconstruction
//! loss, backpropagates its decoder and gathers the cut-point error; the
//! server backpropagates both the reconstruction route and the
//! divergence route, updates, and scatters the summed input errors;
//! every edge backpropagates its encoder. Raw silo rows never enter an
//! envelope - only embedding-width tensors do.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{
    add_grads, bc_loss, bc_loss_grad, kl_loss, kl_loss_grad, reparametrize,
    reparametrize_backward, Activation, KlForm, LatentStats, MlpStack,
};
use crate::numerics::{RngStream, Tensor};
use crate::transport::{
    tensor_concat, tensor_split, Bus, EdgePort, Phase, PayloadLedger, RankId, RootPort,
    TransferRecord,
};

/// Shared run configuration; every rank must hold the same values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub latent_dim: usize,
    /// Embedding width per edge rank, in rank order.
    pub embed_dims: Vec<usize>,
    pub lr_edge_encoder: f64,
    pub lr_edge_decoder: f64,
    pub lr_server_encoder: f64,
    pub lr_server_decoder: f64,
    #[serde(default)]
    pub kl_form: KlForm,
    pub edge_hidden: usize,
    pub server_hidden: usize,
    #[serde(default = "default_timeout_secs")]
    pub collective_timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

impl TrainConfig {
    /// Defaults for `n_edges` ranks with a uniform embedding width.
    pub fn new(n_edges: usize, embed_dim: usize, latent_dim: usize, seed: u64) -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            seed,
            latent_dim,
            embed_dims: vec![embed_dim; n_edges],
            lr_edge_encoder: 1e-2,
            lr_edge_decoder: 1e-2,
            lr_server_encoder: 1e-2,
            lr_server_decoder: 1e-2,
            kl_form: KlForm::Standard,
            edge_hidden: 64,
            server_hidden: 128,
            collective_timeout_secs: default_timeout_secs(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.embed_dims.len()
    }

    pub fn total_embed_dim(&self) -> usize {
        self.embed_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dims.is_empty() {
            return Err(Error::Config("at least one edge rank is required".into()));
        }
        if self.embed_dims.contains(&0) || self.latent_dim == 0 {
            return Err(Error::Config("embedding and latent dims must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.edge_hidden == 0 || self.server_hidden == 0 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        for (name, lr) in [
            ("lr_edge_encoder", self.lr_edge_encoder),
            ("lr_edge_decoder", self.lr_edge_decoder),
            ("lr_server_encoder", self.lr_server_encoder),
            ("lr_server_decoder", self.lr_server_decoder),
        ] {
            if lr <= 0.0 || !lr.is_finite() {
                return Err(Error::Config(format!("{} must be positive, got {}", name, lr)));
            }
        }
        Ok(())
    }

    /// Hash of the canonical serialized config, recorded in checkpoints
    /// and the run manifest.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

/// One stakeholder process: local data (normalized to [0, 1]), an
/// encoder producing the transmitted embedding, and a decoder that
/// reconstructs the local data from the server's estimate.
#[derive(Clone, Debug)]
pub struct EdgeAgent {
    pub rank: RankId,
    silo: Tensor,
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub embed_dim: usize,
    lr_encoder: f64,
    lr_decoder: f64,
    current_target: Option<Tensor>,
    current_reconstruction: Option<Tensor>,
}

fn check_silo(silo: &Tensor) -> Result<(usize, usize)> {
    let dims = silo.dims2()?;
    if silo.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Data(
            "silo data must be normalized to [0, 1] before training".into(),
        ));
    }
    Ok(dims)
}

impl EdgeAgent {
    /// Standard architecture: encoder `d -> hidden -> embed` with a
    /// sigmoid cut point, decoder `embed -> hidden -> d` with a sigmoid
    /// output. Parameters are seeded from the rank's own stream.
    pub fn new(rank: RankId, silo: Tensor, config: &TrainConfig) -> Result<Self> {
        if rank.is_root() {
            return Err(Error::Config("edge agents use ranks 1..=N".into()));
        }
        let (_, width) = check_silo(&silo)?;
        let embed_dim = config.embed_dims[rank.0 - 1];
        let mut rng = RngStream::new(config.seed, rank.0 as u64);
        let encoder = MlpStack::init(
            &[width, config.edge_hidden, embed_dim],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        )?;
        let decoder = MlpStack::init(
            &[embed_dim, config.edge_hidden, width],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(EdgeAgent {
            rank,
            silo,
            encoder,
            decoder,
            embed_dim,
            lr_encoder: config.lr_edge_encoder,
            lr_decoder: config.lr_edge_decoder,
            current_target: None,
            current_reconstruction: None,
        })
    }

    /// Assemble an agent from explicit stacks (tests, checkpoint loads).
    pub fn from_parts(
        rank: RankId,
        silo: Tensor,
        encoder: MlpStack,
        decoder: MlpStack,
        lr_encoder: f64,
        lr_decoder: f64,
    ) -> Result<Self> {
        let (_, width) = check_silo(&silo)?;
        if encoder.input_dim() != width || decoder.output_dim() != width {
            return Err(Error::Dimension(format!(
                "edge stacks expect width {}, encoder takes {}, decoder emits {}",
                width,
                encoder.input_dim(),
                decoder.output_dim()
            )));
        }
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::Dimension(
                "encoder output width must equal decoder input width".into(),
            ));
        }
        let embed_dim = encoder.output_dim();
        Ok(EdgeAgent {
            rank,
            silo,
            encoder,
            decoder,
            embed_dim,
            lr_encoder,
            lr_decoder,
            current_target: None,
            current_reconstruction: None,
        })
    }

    pub fn silo(&self) -> &Tensor {
        &self.silo
    }

    pub fn silo_width(&self) -> usize {
        self.silo.shape()[1]
    }

    pub fn silo_rows(&self) -> usize {
        self.silo.shape()[0]
    }

    /// Rows of the deterministic batch slice `[b*B, (b+1)*B)`.
    pub fn batch_rows(&self, batch: usize, batch_size: usize) -> Result<Tensor> {
        self.silo.slice_rows(batch * batch_size, batch_size)
    }

    /// Encode the batch and contribute the embedding to the forward
    /// gather. The raw rows stay local.
    pub fn encoder_forward(
        &mut self,
        port: &mut EdgePort,
        batch: usize,
        batch_size: usize,
    ) -> Result<()> {
        let rows = self.batch_rows(batch, batch_size)?;
        let embedding = self.encoder.forward(&rows)?;
        self.current_target = Some(rows);
        port.send_gather(Phase::EncFpGather, embedding)
    }

    /// Receive the reconstructed embedding, decode it, and return the
    /// local reconstruction loss.
    pub fn decoder_forward(&mut self, port: &mut EdgePort) -> Result<f64> {
        if self.current_target.is_none() {
            return Err(Error::ProtocolOrder(
                "decoder forward called before encoder forward".into(),
            ));
        }
        let estimate = port.recv_scatter(Phase::DecFpScatter)?;
        let reconstruction = self.decoder.forward(&estimate)?;
        let loss = bc_loss(&reconstruction, self.current_target.as_ref().unwrap())?;
        self.current_reconstruction = Some(reconstruction);
        Ok(loss)
    }

    /// Backpropagate the reconstruction loss through the decoder,
    /// gather the cut-point error, then step the decoder parameters.
    pub fn decoder_backward(&mut self, port: &mut EdgePort) -> Result<()> {
        let reconstruction = self.current_reconstruction.take().ok_or_else(|| {
            Error::ProtocolOrder("decoder backward called before decoder forward".into())
        })?;
        let target = self.current_target.as_ref().ok_or_else(|| {
            Error::ProtocolOrder("decoder backward called before encoder forward".into())
        })?;
        let loss_grad = bc_loss_grad(&reconstruction, target)?;
        let (input_error, grads) = self.decoder.backward(&loss_grad)?;
        port.send_gather(Phase::DecBpGather, input_error)?;
        self.decoder.apply_step(&grads, self.lr_decoder)
    }

    /// Receive the embedding error and step the encoder parameters.
    pub fn encoder_backward(&mut self, port: &mut EdgePort) -> Result<()> {
        let error = port.recv_scatter(Phase::EncBpScatter)?;
        let (_, grads) = self.encoder.backward(&error)?;
        self.encoder.apply_step(&grads, self.lr_encoder)?;
        self.current_target = None;
        Ok(())
    }
}

/// The coordinating process: probabilistic encoder and decoder over the
/// concatenated embedding space, plus the latent noise stream.
#[derive(Clone, Debug)]
pub struct ServerAgent {
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub latent_dim: usize,
    /// Embedding width per edge rank, in rank order.
    pub dims: Vec<usize>,
    lr_encoder: f64,
    lr_decoder: f64,
    kl_form: KlForm,
    rng: RngStream,
    stats: Option<LatentStats>,
    trained: bool,
}

impl ServerAgent {
    /// Standard architecture: encoder `sum(embed) -> hidden -> 2s`
    /// (identity head holding mean and log-std), decoder
    /// `s -> hidden -> sum(embed)` with a sigmoid output matching the
    /// edge encoders' sigmoid cut point.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let total = config.total_embed_dim();
        let mut rng = RngStream::new(config.seed, 0);
        let encoder = MlpStack::init(
            &[total, config.server_hidden, 2 * config.latent_dim],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        )?;
        let decoder = MlpStack::init(
            &[config.latent_dim, config.server_hidden, total],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        )?;
        Ok(ServerAgent {
            encoder,
            decoder,
            latent_dim: config.latent_dim,
            dims: config.embed_dims.clone(),
            lr_encoder: config.lr_server_encoder,
            lr_decoder: config.lr_server_decoder,
            kl_form: config.kl_form,
            rng,
            stats: None,
            trained: false,
        })
    }

    /// Assemble a server from explicit stacks (tests, checkpoint loads).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        encoder: MlpStack,
        decoder: MlpStack,
        latent_dim: usize,
        dims: Vec<usize>,
        lr_encoder: f64,
        lr_decoder: f64,
        kl_form: KlForm,
        rng: RngStream,
    ) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if encoder.input_dim() != total || decoder.output_dim() != total {
            return Err(Error::Dimension(format!(
                "server stacks must span the concatenated embedding width {}",
                total
            )));
        }
        if encoder.output_dim() != 2 * latent_dim || decoder.input_dim() != latent_dim {
            return Err(Error::Dimension(
                "server stacks do not match the latent dimension".into(),
            ));
        }
        Ok(ServerAgent {
            encoder,
            decoder,
            latent_dim,
            dims,
            lr_encoder,
            lr_decoder,
            kl_form,
            rng,
            stats: None,
            trained: false,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Snapshot of the noise stream, for oracles that must replay the
    /// same draws.
    pub fn noise_rng(&self) -> RngStream {
        self.rng.clone()
    }

    pub fn latent_stats(&self) -> Option<&LatentStats> {
        self.stats.as_ref()
    }

    /// Gather embeddings, run the probabilistic pass, scatter the
    /// reconstructed embeddings, and return the divergence loss.
    pub fn forward(&mut self, port: &mut RootPort) -> Result<f64> {
        let parts = port.recv_gather(Phase::EncFpGather)?;
        for (i, part) in parts.iter().enumerate() {
            let (_, w) = part.dims2()?;
            if w != self.dims[i] {
                return Err(Error::Protocol(format!(
                    "rank {} sent width {}, dims map expects {}",
                    i + 1,
                    w,
                    self.dims[i]
                )));
            }
        }
        let joined = tensor_concat(&parts)?;
        let head = self.encoder.forward(&joined)?;
        let mut stats = LatentStats::from_encoder_output(&head, self.latent_dim)?;
        let z = reparametrize(&mut stats, &mut self.rng)?;
        let estimate = self.decoder.forward(&z)?;
        let split = tensor_split(&estimate, &self.dims)?;
        port.send_scatter(Phase::DecFpScatter, split)?;
        let divergence = kl_loss(&stats, self.kl_form);
        self.stats = Some(stats);
        Ok(divergence)
    }

    /// Gather the cut-point errors, backpropagate the reconstruction
    /// route and the divergence route, update both stacks, and scatter
    /// the summed input errors back to the edges.
    pub fn backward(&mut self, port: &mut RootPort) -> Result<()> {
        let stats = self.stats.take().ok_or_else(|| {
            Error::ProtocolOrder("server backward called before server forward".into())
        })?;
        let error_parts = port.recv_gather(Phase::DecBpGather)?;
        let joined_error = tensor_concat(&error_parts)?;

        // Reconstruction route: decoder, reparametrization, encoder.
        let (dz, decoder_grads) = self.decoder.backward(&joined_error)?;
        let (d_mean_bc, d_log_std_bc) = reparametrize_backward(&stats, &dz)?;
        let head_bc = tensor_concat(&[d_mean_bc, d_log_std_bc])?;
        let (input_error_bc, encoder_grads_bc) = self.encoder.backward_retain(&head_bc)?;

        // Divergence route: straight into the encoder head.
        let (d_mean_kl, d_log_std_kl) = kl_loss_grad(&stats, self.kl_form);
        let head_kl = tensor_concat(&[d_mean_kl, d_log_std_kl])?;
        let (input_error_kl, encoder_grads_kl) = self.encoder.backward(&head_kl)?;

        self.decoder.apply_step(&decoder_grads, self.lr_decoder)?;
        let encoder_grads = add_grads(&encoder_grads_bc, &encoder_grads_kl)?;
        self.encoder.apply_step(&encoder_grads, self.lr_encoder)?;

        let input_error = input_error_kl.add(&input_error_bc)?;
        let split = tensor_split(&input_error, &self.dims)?;
        port.send_scatter(Phase::EncBpScatter, split)
    }
}

/// Per-epoch loss summary: batch means of the summed edge reconstruction
/// losses and the server divergence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub bc_loss: f64,
    pub kl_loss: f64,
    pub total: f64,
    pub per_edge_bc: Vec<f64>,
}

/// Everything a finished run hands back.
pub struct TrainOutcome {
    pub edges: Vec<EdgeAgent>,
    pub server: ServerAgent,
    pub losses: Vec<EpochLoss>,
    pub ledger: PayloadLedger,
    pub transfers: Vec<TransferRecord>,
}

enum LossEvent {
    EdgeBc { rank: usize, epoch: usize, value: f64 },
    ServerKl { epoch: usize, value: f64 },
}

/// Build the edge agents and the server for a set of silos under one
/// config.
pub fn build_agents(silos: &[Tensor], config: &TrainConfig) -> Result<(Vec<EdgeAgent>, ServerAgent)> {
    config.validate()?;
    if silos.len() != config.n_edges() {
        return Err(Error::Config(format!(
            "{} silos for {} configured edges",
            silos.len(),
            config.n_edges()
        )));
    }
    let mut edges = Vec::with_capacity(silos.len());
    for (i, silo) in silos.iter().enumerate() {
        edges.push(EdgeAgent::new(RankId(i + 1), silo.clone(), config)?);
    }
    let server = ServerAgent::new(config)?;
    Ok((edges, server))
}

fn with_context(error: Error, who: &str, epoch: usize, batch: usize) -> Error {
    match error {
        e @ Error::CollectiveTimeout { .. } => e,
        e => Error::Protocol(format!(
            "{} failed at epoch {}, batch {}: {}",
            who, epoch, batch, e
        )),
    }
}

fn edge_worker(
    mut agent: EdgeAgent,
    mut port: EdgePort,
    epochs: usize,
    batches: usize,
    batch_size: usize,
    bus: Bus,
    events: mpsc::Sender<LossEvent>,
) -> Result<EdgeAgent> {
    let rank = agent.rank.0;
    let who = format!("edge rank {}", rank);
    for epoch in 0..epochs {
        for batch in 0..batches {
            let run = (|| -> Result<()> {
                agent.encoder_forward(&mut port, batch, batch_size)?;
                let bc = agent.decoder_forward(&mut port)?;
                let _ = events.send(LossEvent::EdgeBc {
                    rank,
                    epoch,
                    value: bc,
                });
                agent.decoder_backward(&mut port)?;
                agent.encoder_backward(&mut port)
            })();
            if let Err(e) = run {
                let wrapped = with_context(e, &who, epoch, batch);
                bus.poison(&wrapped.to_string());
                return Err(wrapped);
            }
        }
    }
    Ok(agent)
}

fn server_worker(
    mut server: ServerAgent,
    mut port: RootPort,
    epochs: usize,
    batches: usize,
    bus: Bus,
    events: mpsc::Sender<LossEvent>,
) -> Result<ServerAgent> {
    for epoch in 0..epochs {
        for batch in 0..batches {
            let run = (|| -> Result<()> {
                let kl = server.forward(&mut port)?;
                let _ = events.send(LossEvent::ServerKl { epoch, value: kl });
                server.backward(&mut port)
            })();
            if let Err(e) = run {
                let wrapped = with_context(e, "server", epoch, batch);
                bus.poison(&wrapped.to_string());
                return Err(wrapped);
            }
        }
    }
    Ok(server)
}

/// Run the full decentralized training loop: one worker thread per edge
/// rank plus the server, synchronized only through the collectives.
/// Identical seeds and configs reproduce bitwise-identical parameter
/// trajectories.
pub fn train(
    edges: Vec<EdgeAgent>,
    mut server: ServerAgent,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = edges.len();
    if n != config.n_edges() {
        return Err(Error::Config(format!(
            "{} edge agents for {} configured ranks",
            n,
            config.n_edges()
        )));
    }
    let rows = edges[0].silo_rows();
    for e in &edges {
        if e.silo_rows() != rows {
            return Err(Error::Config(
                "all silos must hold the same number of rows".into(),
            ));
        }
    }
    if config.batch_size > rows {
        return Err(Error::Config(format!(
            "batch size {} exceeds {} silo rows",
            config.batch_size, rows
        )));
    }
    let batches = rows / config.batch_size;

    if config.epochs == 0 {
        server.mark_trained();
        return Ok(TrainOutcome {
            edges,
            server,
            losses: Vec::new(),
            ledger: PayloadLedger::default(),
            transfers: Vec::new(),
        });
    }

    let bus = Bus::with_timeout(
        n,
        batches,
        Duration::from_secs(config.collective_timeout_secs),
    );
    let raw_bytes: u64 = edges
        .iter()
        .map(|e| (e.silo_rows() * e.silo_width() * 8) as u64)
        .sum();
    bus.set_raw_baseline(raw_bytes);

    let (tx, rx) = mpsc::channel();
    let mut handles = Vec::with_capacity(n);
    for agent in edges {
        let port = bus.edge_port(agent.rank)?;
        let events = tx.clone();
        let bus_handle = bus.clone();
        let epochs = config.epochs;
        let batch_size = config.batch_size;
        handles.push(
            thread::Builder::new()
                .name(format!("edge-{}", agent.rank))
                .spawn(move || {
                    edge_worker(agent, port, epochs, batches, batch_size, bus_handle, events)
                })
                .map_err(Error::Io)?,
        );
    }
    let server_result = server_worker(
        server,
        bus.root_port(),
        config.epochs,
        batches,
        bus.clone(),
        tx,
    );

    let mut edge_results = Vec::with_capacity(n);
    for handle in handles {
        match handle.join() {
            Ok(result) => edge_results.push(result),
            Err(_) => {
                return Err(Error::Protocol("an edge worker panicked".into()));
            }
        }
    }

    // Prefer the root-cause error over "run aborted" echoes from peers
    // that were unblocked by the poison.
    let mut aborted_echo: Option<Error> = None;
    let mut primary: Option<Error> = None;
    let mut edges_back = Vec::with_capacity(n);
    for result in edge_results {
        match result {
            Ok(agent) => edges_back.push(agent),
            Err(e) => {
                if e.to_string().contains("run aborted") {
                    aborted_echo.get_or_insert(e);
                } else {
                    primary.get_or_insert(e);
                }
            }
        }
    }
    let server = match server_result {
        Ok(server) => Some(server),
        Err(e) => {
            if e.to_string().contains("run aborted") {
                aborted_echo.get_or_insert(e);
            } else {
                primary.get_or_insert(e);
            }
            None
        }
    };
    if let Some(e) = primary.or(aborted_echo) {
        return Err(e);
    }
    let mut server = server.expect("no error implies the server survived");
    server.mark_trained();
    edges_back.sort_by_key(|a| a.rank);

    // Deterministic per-epoch aggregation of the out-of-band loss log.
    let mut edge_bc = vec![vec![0.0f64; n]; config.epochs];
    let mut kl = vec![0.0f64; config.epochs];
    let mut seen_bc = vec![0usize; config.epochs];
    let mut seen_kl = vec![0usize; config.epochs];
    for event in rx.try_iter() {
        match event {
            LossEvent::EdgeBc { rank, epoch, value } => {
                edge_bc[epoch][rank - 1] += value;
                seen_bc[epoch] += 1;
            }
            LossEvent::ServerKl { epoch, value } => {
                kl[epoch] += value;
                seen_kl[epoch] += 1;
            }
        }
    }
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if seen_bc[epoch] != n * batches || seen_kl[epoch] != batches {
            return Err(Error::Protocol(format!(
                "loss log incomplete for epoch {}",
                epoch
            )));
        }
        let per_edge_bc: Vec<f64> = edge_bc[epoch].iter().map(|v| v / batches as f64).collect();
        let bc_total: f64 = per_edge_bc.iter().sum();
        let kl_mean = kl[epoch] / batches as f64;
        let total = bc_total + kl_mean;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at epoch {}",
                epoch
            )));
        }
        losses.push(EpochLoss {
            epoch,
            bc_loss: bc_total,
            kl_loss: kl_mean,
            total,
            per_edge_bc,
        });
    }

    let (ledger, transfers) = bus.into_accounting();
    Ok(TrainOutcome {
        edges: edges_back,
        server,
        losses,
        ledger,
        transfers,
    })
}

/// Decoder-side model sufficient for scenario generation: sample the
/// latent prior, decode to embeddings, split per rank, decode locally.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    pub latent_dim: usize,
    pub dims: Vec<usize>,
    pub server_decoder: MlpStack,
    pub edge_decoders: Vec<MlpStack>,
}

impl GeneratorModel {
    pub fn from_agents(edges: &[EdgeAgent], server: &ServerAgent) -> Result<Self> {
        if !server.is_trained() {
            return Err(Error::State(
                "scenario generation requires trained or loaded parameters".into(),
            ));
        }
        if edges.len() != server.dims.len() {
            return Err(Error::Config(format!(
                "{} edges for a dims map of {}",
                edges.len(),
                server.dims.len()
            )));
        }
        Ok(GeneratorModel {
            latent_dim: server.latent_dim,
            dims: server.dims.clone(),
            server_decoder: server.decoder.clone(),
            edge_decoders: edges.iter().map(|e| e.decoder.clone()).collect(),
        })
    }

    pub fn from_checkpoints(server: &ServerCheckpoint, edges: &[EdgeCheckpoint]) -> Result<Self> {
        if edges.len() != server.dims.len() {
            return Err(Error::Config(format!(
                "{} edge checkpoints for a dims map of {}",
                edges.len(),
                server.dims.len()
            )));
        }
        for (i, e) in edges.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::Config(format!(
                    "edge checkpoints out of rank order at position {}",
                    i
                )));
            }
        }
        Ok(GeneratorModel {
            latent_dim: server.latent_dim,
            dims: server.dims.clone(),
            server_decoder: server.decoder.clone(),
            edge_decoders: edges.iter().map(|e| e.decoder.clone()).collect(),
        })
    }

    /// Generate `count` scenarios per edge, in normalized [0, 1] units,
    /// rank order.
    pub fn generate(&self, count: usize, rng: &mut RngStream) -> Result<Vec<Tensor>> {
        let z = rng.standard_normal(&[count, self.latent_dim]);
        let embeddings = self.server_decoder.infer(&z)?;
        let parts = tensor_split(&embeddings, &self.dims)?;
        let mut scenarios = Vec::with_capacity(parts.len());
        for (part, decoder) in parts.iter().zip(&self.edge_decoders) {
            let out = decoder.infer(part)?;
            scenarios.push(out.map(|v| v.clamp(0.0, 1.0)));
        }
        Ok(scenarios)
    }

    /// Generated scenarios joined across ranks into the full feature
    /// space.
    pub fn generate_joined(&self, count: usize, rng: &mut RngStream) -> Result<Tensor> {
        tensor_concat(&self.generate(count, rng)?)
    }
}

/// Post-training scenario generation against live agents.
pub fn generate_scenarios(
    edges: &[EdgeAgent],
    server: &ServerAgent,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<Tensor>> {
    GeneratorModel::from_agents(edges, server)?.generate(count, rng)
}

// ---------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeCheckpoint {
    pub rank: usize,
    pub embed_dim: usize,
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub config_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerCheckpoint {
    pub latent_dim: usize,
    pub dims: Vec<usize>,
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub config_hash: String,
}

/// Write `rank{n}.ckpt` per edge plus `server.ckpt`; returns the server
/// path and the edge paths in rank order.
pub fn save_checkpoints(
    dir: &Path,
    edges: &[EdgeAgent],
    server: &ServerAgent,
    config_hash: &str,
) -> Result<(PathBuf, Vec<PathBuf>)> {
    std::fs::create_dir_all(dir)?;
    let server_path = dir.join("server.ckpt");
    let server_ck = ServerCheckpoint {
        latent_dim: server.latent_dim,
        dims: server.dims.clone(),
        encoder: server.encoder.clone(),
        decoder: server.decoder.clone(),
        config_hash: config_hash.to_string(),
    };
    std::fs::write(&server_path, serde_json::to_vec_pretty(&server_ck)?)?;
    let mut edge_paths = Vec::with_capacity(edges.len());
    for edge in edges {
        let path = dir.join(format!("rank{}.ckpt", edge.rank.0));
        let ck = EdgeCheckpoint {
            rank: edge.rank.0,
            embed_dim: edge.embed_dim,
            encoder: edge.encoder.clone(),
            decoder: edge.decoder.clone(),
            config_hash: config_hash.to_string(),
        };
        std::fs::write(&path, serde_json::to_vec_pretty(&ck)?)?;
        edge_paths.push(path);
    }
    Ok((server_path, edge_paths))
}

pub fn load_server_checkpoint(path: &Path) -> Result<ServerCheckpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::State(format!("missing checkpoint {}: {}", path.display(), e)))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn load_edge_checkpoint(path: &Path) -> Result<EdgeCheckpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::State(format!("missing checkpoint {}: {}", path.display(), e)))?;
    Ok(serde_json::from_slice(&bytes)?)
}
