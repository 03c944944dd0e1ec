//! Decentralized scenario generation from siloed data.
//!
//! Edge agents hold local data and a plain autoencoder; a server agent
//! holds a variational autoencoder over the concatenated edge embeddings.
//! Training runs over gather/scatter collectives so that raw data never
//! leaves its silo: embeddings travel forward, gradients travel backward.
//! The crate also ships centralized baselines (a conventional VAE and a
//! Gaussian copula), scenario-quality metrics, and a synthetic
//! spatiotemporal data generator for desk-scale experiments.

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod pipeline;
pub mod protocol;
pub mod transport;

pub use error::{Error, Result};
