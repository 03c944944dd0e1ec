//! End-to-end run orchestration shared by the command-line interface and
//! the acceptance suite: dataset preparation (synthetic or CSV),
//! training with artifact emission, scenario generation, metric
//! evaluation over repeated runs, the three-way method comparison, and
//! the payload report. All outputs are CSV plus a JSON run manifest;
//! given fixed seeds every CSV byte is reproducible (timestamps live
//! only in the manifest).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::baselines::{CentralVae, CopulaModel, CvaeConfig};
use crate::datasets::{
    denormalize, load_csv, normalize, partition_silos, synth_feature_names, synth_generate,
    write_csv, NormStats, SiloMap, SiloSpec, SynthConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{autocorrelation, write_report_csv, MetricReport};
use crate::numerics::{RngStream, Tensor};
use crate::protocol::{
    build_agents, load_edge_checkpoint, load_server_checkpoint, save_checkpoints, train,
    EpochLoss, GeneratorModel, TrainConfig,
};
use crate::transport::LedgerReport;

/// Stream id used for the one-time row shuffle at load.
const SHUFFLE_STREAM: u64 = 1 << 40;

/// Where the observations come from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(SynthConfig),
    Csv { path: PathBuf },
}

/// Dataset preparation recipe.
#[derive(Clone, Debug)]
pub struct DataSpec {
    pub source: DataSource,
    pub silos: SiloSpec,
    pub train_frac: f64,
    /// Node count hint for centroid/autocorrelation diagnostics when the
    /// source is a generic CSV; synthetic sources carry their own.
    pub structure_hint: Option<usize>,
}

/// Provenance recorded in the manifest; enough to rebuild the exact
/// train/eval partitions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DataProvenance {
    Synthetic(SynthConfig),
    Csv { path: String },
}

/// Materialized dataset: normalized train/eval partitions plus the silo
/// layout.
pub struct PreparedData {
    pub train: Tensor,
    pub eval: Tensor,
    pub norm: NormStats,
    pub silo_map: SiloMap,
    pub feature_names: Vec<String>,
    pub provenance: DataProvenance,
    /// (nodes, horizon) when the column layout is node-major time series.
    pub structure: Option<(usize, usize)>,
}

impl PreparedData {
    pub fn train_silos(&self) -> Result<Vec<Tensor>> {
        self.silo_map.partition(&self.train)
    }
}

fn shuffle_rows(data: &Tensor, seed: u64) -> Result<Tensor> {
    let (m, _) = data.dims2()?;
    let mut rng = RngStream::new(seed, SHUFFLE_STREAM);
    let order = rng.shuffled_indices(m);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| data.row(i).to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// Load, shuffle once, split train/eval, fit normalization on the train
/// partition only, and lay out the silos.
pub fn prepare_data(spec: &DataSpec, seed: u64) -> Result<PreparedData> {
    if !(0.0..=1.0).contains(&spec.train_frac) {
        return Err(Error::Config(format!(
            "train fraction must be in [0, 1], got {}",
            spec.train_frac
        )));
    }
    let (raw, names, provenance, structure) = match &spec.source {
        DataSource::Synthetic(cfg) => {
            let (data, _descriptor) = synth_generate(cfg)?;
            (
                data,
                synth_feature_names(cfg.nodes, cfg.horizon),
                DataProvenance::Synthetic(cfg.clone()),
                Some((cfg.nodes, cfg.horizon)),
            )
        }
        DataSource::Csv { path } => {
            let (data, names) = load_csv(path)?;
            let (_, d) = data.dims2()?;
            let structure = spec.structure_hint.and_then(|nodes| {
                if nodes > 0 && d % nodes == 0 {
                    Some((nodes, d / nodes))
                } else {
                    None
                }
            });
            (
                data,
                names,
                DataProvenance::Csv {
                    path: path.display().to_string(),
                },
                structure,
            )
        }
    };

    let shuffled = shuffle_rows(&raw, seed)?;
    let (m, d) = shuffled.dims2()?;
    let rows_train = ((m as f64) * spec.train_frac).floor() as usize;
    if rows_train == 0 || rows_train == m {
        return Err(Error::Config(format!(
            "train fraction {} leaves an empty partition for {} rows",
            spec.train_frac, m
        )));
    }
    let train_raw = shuffled.slice_rows(0, rows_train)?;
    let eval_raw = shuffled.slice_rows(rows_train, m - rows_train)?;
    let (train, norm) = normalize(&train_raw, None)?;
    let (eval, _) = normalize(&eval_raw, Some(&norm))?;
    let silo_map = partition_silos(d, &spec.silos)?;

    Ok(PreparedData {
        train,
        eval,
        norm,
        silo_map,
        feature_names: names,
        provenance,
        structure,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointPaths {
    pub server: String,
    pub edges: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub total_bytes: u64,
    pub per_epoch_bytes: u64,
    pub raw_bytes: u64,
    pub reduction_factor: f64,
}

impl From<&LedgerReport> for LedgerSummary {
    fn from(report: &LedgerReport) -> Self {
        LedgerSummary {
            total_bytes: report.total_bytes,
            per_epoch_bytes: report.per_epoch_bytes,
            raw_bytes: report.raw_bytes,
            reduction_factor: report.reduction_factor,
        }
    }
}

/// Everything required to reproduce and extend a run; written next to
/// the checkpoints as `run.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_unix: u64,
    pub seed: u64,
    pub gen_seed: Option<u64>,
    pub config: TrainConfig,
    pub config_hash: String,
    pub data: DataProvenance,
    pub train_frac: f64,
    pub rows_train: usize,
    pub rows_eval: usize,
    pub silo_dims: Vec<usize>,
    pub feature_names: Vec<String>,
    pub norm: NormStats,
    pub structure: Option<(usize, usize)>,
    pub checkpoints: CheckpointPaths,
    pub loss_csv: Option<String>,
    pub ledger_csv: Option<String>,
    pub ledger: Option<LedgerSummary>,
}

pub const MANIFEST_NAME: &str = "run.json";

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::State(format!("missing manifest {}: {}", path.display(), e)))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Rebuild the normalized evaluation partition recorded by this run.
    pub fn rebuild_eval(&self) -> Result<Tensor> {
        let source = match &self.data {
            DataProvenance::Synthetic(cfg) => DataSource::Synthetic(cfg.clone()),
            DataProvenance::Csv { path } => DataSource::Csv {
                path: PathBuf::from(path),
            },
        };
        let spec = DataSpec {
            source,
            silos: SiloSpec::Explicit(self.silo_dims.clone()),
            train_frac: self.train_frac,
            structure_hint: self.structure.map(|(n, _)| n),
        };
        let prepared = prepare_data(&spec, self.seed)?;
        Ok(prepared.eval)
    }

    /// Load the generator model from this manifest's checkpoints.
    pub fn load_generator(&self, dir: &Path) -> Result<GeneratorModel> {
        let server = load_server_checkpoint(&dir.join(&self.checkpoints.server))?;
        let edges = self
            .checkpoints
            .edges
            .iter()
            .map(|name| load_edge_checkpoint(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        GeneratorModel::from_checkpoints(&server, &edges)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn losses_csv(losses: &[EpochLoss], n_edges: usize) -> String {
    let mut out = String::from("epoch,total,bc,kl");
    for rank in 1..=n_edges {
        let _ = write!(out, ",bc_rank{}", rank);
    }
    out.push('\n');
    for loss in losses {
        let _ = write!(
            out,
            "{},{},{},{}",
            loss.epoch, loss.total, loss.bc_loss, loss.kl_loss
        );
        for v in &loss.per_edge_bc {
            let _ = write!(out, ",{}", v);
        }
        out.push('\n');
    }
    out
}

/// Train and write all artifacts (checkpoints, loss CSV, ledger CSV,
/// manifest) into `out_dir`.
pub fn run_train(
    out_dir: &Path,
    data_spec: &DataSpec,
    config: &TrainConfig,
    gen_seed: Option<u64>,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    let prepared = prepare_data(data_spec, config.seed)?;
    if prepared.silo_map.n_edges() != config.n_edges() {
        return Err(Error::Config(format!(
            "config lists {} embedding dims but the silo spec yields {} edges",
            config.n_edges(),
            prepared.silo_map.n_edges()
        )));
    }
    let silos = prepared.train_silos()?;
    let (edges, server) = build_agents(&silos, config)?;
    let outcome = train(edges, server, config)?;

    let hash = config.config_hash();
    let (server_path, edge_paths) =
        save_checkpoints(out_dir, &outcome.edges, &outcome.server, &hash)?;

    let mut loss_csv = None;
    let mut ledger_csv = None;
    let mut ledger_summary = None;
    if config.epochs > 0 {
        let loss_path = out_dir.join("losses.csv");
        std::fs::write(&loss_path, losses_csv(&outcome.losses, config.n_edges()))?;
        loss_csv = Some("losses.csv".to_string());

        let ledger_path = out_dir.join("ledger.csv");
        let mut buffer = Vec::new();
        outcome.ledger.write_csv(&mut buffer)?;
        std::fs::write(&ledger_path, buffer)?;
        ledger_csv = Some("ledger.csv".to_string());
        ledger_summary = Some(LedgerSummary::from(&outcome.ledger.report()?));
    }

    let (rows_train, _) = prepared.train.dims2()?;
    let (rows_eval, _) = prepared.eval.dims2()?;
    let manifest = RunManifest {
        created_unix: unix_now(),
        seed: config.seed,
        gen_seed,
        config: config.clone(),
        config_hash: hash,
        data: prepared.provenance.clone(),
        train_frac: spec_train_frac(data_spec),
        rows_train,
        rows_eval,
        silo_dims: prepared.silo_map.dims().to_vec(),
        feature_names: prepared.feature_names.clone(),
        norm: prepared.norm.clone(),
        structure: prepared.structure,
        checkpoints: CheckpointPaths {
            server: file_name(&server_path),
            edges: edge_paths.iter().map(|p| file_name(p)).collect(),
        },
        loss_csv,
        ledger_csv,
        ledger: ledger_summary,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn spec_train_frac(spec: &DataSpec) -> f64 {
    spec.train_frac
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Feature names for one silo's columns.
fn silo_names(manifest: &RunManifest, edge_index: usize) -> Vec<String> {
    let offset: usize = manifest.silo_dims[..edge_index].iter().sum();
    let width = manifest.silo_dims[edge_index];
    manifest.feature_names[offset..offset + width].to_vec()
}

fn silo_norm(manifest: &RunManifest, edge_index: usize) -> NormStats {
    let offset: usize = manifest.silo_dims[..edge_index].iter().sum();
    let width = manifest.silo_dims[edge_index];
    NormStats {
        mins: manifest.norm.mins[offset..offset + width].to_vec(),
        maxs: manifest.norm.maxs[offset..offset + width].to_vec(),
        constant: manifest.norm.constant[offset..offset + width].to_vec(),
    }
}

/// Generate `count` scenarios per edge from a finished run, denormalize
/// with the recorded stats, and write one `scenarios_rank{n}.csv` per
/// edge. Identical `gen_seed` values reproduce identical files.
pub fn run_generate(
    manifest_path: &Path,
    count: usize,
    gen_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let generator = manifest.load_generator(dir)?;
    std::fs::create_dir_all(out_dir)?;

    let mut rng = RngStream::new(gen_seed, 0);
    let scenarios = generator.generate(count, &mut rng)?;
    let mut paths = Vec::with_capacity(scenarios.len());
    for (i, scenario) in scenarios.iter().enumerate() {
        let stats = silo_norm(&manifest, i);
        let denormalized = denormalize(scenario, &stats)?;
        let path = out_dir.join(format!("scenarios_rank{}.csv", i + 1));
        write_csv(&path, &denormalized, &silo_names(&manifest, i))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Evaluation input: either regenerate from a manifest, or compare two
/// static files single-shot.
pub enum EvaluateInput {
    Manifest {
        manifest_path: PathBuf,
        runs: usize,
        count: usize,
        gen_seed: u64,
    },
    Static {
        observed: PathBuf,
        generated: Vec<PathBuf>,
    },
}

/// Compute the metric report and write it as CSV to `out_path`.
pub fn run_evaluate(input: &EvaluateInput, out_path: &Path) -> Result<MetricReport> {
    let (report, method) = match input {
        EvaluateInput::Manifest {
            manifest_path,
            runs,
            count,
            gen_seed,
        } => {
            let manifest = RunManifest::load(manifest_path)?;
            let dir = manifest_path.parent().unwrap_or(Path::new("."));
            let generator = manifest.load_generator(dir)?;
            let observed = manifest.rebuild_eval()?;
            let report = MetricReport::collect(&observed, *runs, |run| {
                let mut rng = RngStream::new(*gen_seed, run as u64);
                generator.generate_joined(*count, &mut rng)
            })?;
            (report, "splitvae")
        }
        EvaluateInput::Static {
            observed,
            generated,
        } => {
            let (observed, _) = load_csv(observed)?;
            if generated.is_empty() {
                return Err(Error::Config("no generated files supplied".into()));
            }
            let mut parts = Vec::with_capacity(generated.len());
            for path in generated {
                parts.push(load_csv(path)?.0);
            }
            let joined = crate::transport::tensor_concat(&parts)?;
            let (_, d_obs) = observed.dims2()?;
            let (_, d_gen) = joined.dims2()?;
            if d_obs != d_gen {
                return Err(Error::Config(format!(
                    "observed width {} does not match generated width {}",
                    d_obs, d_gen
                )));
            }
            let report = MetricReport::collect(&observed, 1, |_| Ok(joined.clone()))?;
            (report, "static")
        }
    };
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buffer = Vec::new();
    write_report_csv(&mut buffer, &[(method, &report)])?;
    std::fs::write(out_path, buffer)?;
    Ok(report)
}

/// Artifacts of a three-way comparison run.
pub struct CompareOutcome {
    pub manifest: RunManifest,
    pub reports: Vec<(String, MetricReport)>,
    pub metrics_csv: PathBuf,
}

/// Mean over samples and nodes at each time step.
fn dataset_centroid(data: &Tensor, nodes: usize, horizon: usize) -> Result<Tensor> {
    let (m, d) = data.dims2()?;
    if d != nodes * horizon {
        return Err(Error::Dimension(format!(
            "centroid layout {}x{} does not cover width {}",
            nodes, horizon, d
        )));
    }
    let mut sums = vec![0.0; horizon];
    for r in 0..m {
        let row = data.row(r);
        for node in 0..nodes {
            for (t, sum) in sums.iter_mut().enumerate() {
                *sum += row[node * horizon + t];
            }
        }
    }
    let scale = 1.0 / (m * nodes) as f64;
    Tensor::new(vec![horizon], sums.iter().map(|v| v * scale).collect())
}

fn write_diagnostics(
    out_dir: &Path,
    method: &str,
    observed: &Tensor,
    generated: &Tensor,
    nodes: usize,
    horizon: usize,
) -> Result<()> {
    let obs_centroid = dataset_centroid(observed, nodes, horizon)?;
    let gen_centroid = dataset_centroid(generated, nodes, horizon)?;
    let mut text = String::from("t,observed,generated\n");
    for t in 0..horizon {
        let _ = writeln!(
            text,
            "{},{},{}",
            t,
            obs_centroid.data()[t],
            gen_centroid.data()[t]
        );
    }
    std::fs::write(out_dir.join(format!("centroid_{}.csv", method)), text)?;

    let max_lag = horizon.saturating_sub(1).max(1);
    let obs_ac = autocorrelation(&obs_centroid, max_lag)?;
    let gen_ac = autocorrelation(&gen_centroid, max_lag)?;
    let mut text = String::from("lag,observed,generated\n");
    for lag in 0..max_lag {
        let _ = writeln!(
            text,
            "{},{},{}",
            lag,
            obs_ac.values.data()[lag],
            gen_ac.values.data()[lag]
        );
    }
    std::fs::write(out_dir.join(format!("autocorr_{}.csv", method)), text)?;
    Ok(())
}

/// Train the split protocol and the centralized VAE, fit the copula, and
/// evaluate all three on the held-out partition with `runs` repeated
/// generations of `count` scenarios each.
pub fn run_compare(
    out_dir: &Path,
    data_spec: &DataSpec,
    config: &TrainConfig,
    runs: usize,
    count: usize,
    gen_seed: u64,
) -> Result<CompareOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = run_train(out_dir, data_spec, config, Some(gen_seed))?;
    let prepared = prepare_data(data_spec, config.seed)?;
    let observed = &prepared.eval;

    // Split protocol, regenerated per run from the checkpoints.
    let generator = manifest.load_generator(out_dir)?;
    let split_report = MetricReport::collect(observed, runs, |run| {
        let mut rng = RngStream::new(gen_seed, run as u64);
        generator.generate_joined(count, &mut rng)
    })?;

    // Centralized VAE on the full concatenated training data.
    let cvae_cfg = CvaeConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        latent_dim: config.latent_dim,
        hidden: config.server_hidden,
        lr_encoder: config.lr_server_encoder,
        lr_decoder: config.lr_server_decoder,
        kl_form: config.kl_form,
    };
    let (_, width) = prepared.train.dims2()?;
    let mut cvae = CentralVae::new(width, &cvae_cfg)?;
    let cvae_losses = cvae.train(&prepared.train, &cvae_cfg)?;
    std::fs::write(
        out_dir.join("central_vae.ckpt"),
        serde_json::to_vec_pretty(&CvaeArtifact {
            config: cvae_cfg.clone(),
            encoder: cvae.encoder.clone(),
            decoder: cvae.decoder.clone(),
            config_hash: manifest.config_hash.clone(),
        })?,
    )?;
    let mut text = String::from("epoch,total,bc,kl\n");
    for (epoch, loss) in cvae_losses.iter().enumerate() {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            epoch, loss.total, loss.bc_loss, loss.kl_loss
        );
    }
    std::fs::write(out_dir.join("central_vae_losses.csv"), text)?;
    let cvae_report = MetricReport::collect(observed, runs, |run| {
        let mut rng = RngStream::new(gen_seed, run as u64);
        cvae.generate(count, &mut rng)
    })?;

    // Gaussian copula fit on the same (normalized) training partition.
    let mut copula = CopulaModel::fit(&prepared.train)?;
    std::fs::write(
        out_dir.join("copula.json"),
        serde_json::to_vec(&copula)?,
    )?;
    let copula_report = MetricReport::collect(observed, runs, |run| {
        let mut rng = RngStream::new(gen_seed, run as u64);
        copula.sample(count, &mut rng)
    })?;

    let reports = vec![
        ("splitvae".to_string(), split_report),
        ("central_vae".to_string(), cvae_report),
        ("copula".to_string(), copula_report),
    ];
    let metrics_csv = out_dir.join("metrics.csv");
    let mut buffer = Vec::new();
    let views: Vec<(&str, &MetricReport)> = reports
        .iter()
        .map(|(name, report)| (name.as_str(), report))
        .collect();
    write_report_csv(&mut buffer, &views)?;
    std::fs::write(&metrics_csv, buffer)?;

    if let Some((nodes, horizon)) = prepared.structure {
        let mut split_rng = RngStream::new(gen_seed, 0);
        let split_sample = generator.generate_joined(count, &mut split_rng)?;
        write_diagnostics(out_dir, "splitvae", observed, &split_sample, nodes, horizon)?;
        let mut cvae_rng = RngStream::new(gen_seed, 0);
        let cvae_sample = cvae.generate(count, &mut cvae_rng)?;
        write_diagnostics(out_dir, "central_vae", observed, &cvae_sample, nodes, horizon)?;
        let mut copula_rng = RngStream::new(gen_seed, 0);
        let copula_sample = copula.sample(count, &mut copula_rng)?;
        write_diagnostics(out_dir, "copula", observed, &copula_sample, nodes, horizon)?;
    }

    Ok(CompareOutcome {
        manifest,
        reports,
        metrics_csv,
    })
}

#[derive(Serialize, Deserialize)]
struct CvaeArtifact {
    config: CvaeConfig,
    encoder: crate::nn::MlpStack,
    decoder: crate::nn::MlpStack,
    config_hash: String,
}

/// One row per manifest: uniform embedding width, transmitted bytes, and
/// the reduction factor, sorted by embedding width.
pub fn run_payload_report(manifest_paths: &[PathBuf], out_path: &Path) -> Result<()> {
    if manifest_paths.is_empty() {
        return Err(Error::Config("payload report needs at least one manifest".into()));
    }
    let mut rows = Vec::with_capacity(manifest_paths.len());
    for path in manifest_paths {
        let manifest = RunManifest::load(path)?;
        let ledger = manifest.ledger.as_ref().ok_or_else(|| {
            Error::State(format!(
                "manifest {} has no ledger (zero-epoch run?)",
                path.display()
            ))
        })?;
        let dims = &manifest.config.embed_dims;
        let uniform = dims.iter().all(|d| d == &dims[0]);
        let label = if uniform {
            dims[0].to_string()
        } else {
            "mixed".to_string()
        };
        rows.push((
            dims[0],
            label,
            ledger.per_epoch_bytes,
            ledger.raw_bytes,
            ledger.reduction_factor,
        ));
    }
    rows.sort_by_key(|r| r.0);
    let mut text = String::from("embed_dim,per_epoch_bytes,raw_bytes,reduction_factor\n");
    for (_, label, bytes, raw, factor) in rows {
        let _ = writeln!(text, "{},{},{},{}", label, bytes, raw, factor);
    }
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out_path, text)?;
    Ok(())
}
