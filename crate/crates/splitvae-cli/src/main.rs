//! `splitvae` command line: train the split protocol, generate
//! scenarios, evaluate them, compare against the centralized baselines,
//! and summarize data movement. Configuration comes from an optional
//! TOML file plus flag overrides (flags win); all randomness flows from
//! `--seed` (training) and `--gen-seed` (generation).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use splitvae::datasets::{SiloSpec, SynthConfig};
use splitvae::nn::KlForm;
use splitvae::pipeline::{
    run_compare, run_evaluate, run_generate, run_payload_report, run_train, DataSource, DataSpec,
    EvaluateInput,
};
use splitvae::protocol::TrainConfig;
use splitvae::Error;

#[derive(Parser)]
#[command(name = "splitvae", version, about = "Decentralized scenario generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the split protocol and write checkpoints, loss and ledger
    /// CSVs, and the run manifest.
    Train(TrainArgs),
    /// Generate scenarios from a finished run's manifest.
    Generate(GenerateArgs),
    /// Evaluate generated scenarios against observed data.
    Evaluate(EvaluateArgs),
    /// Train/fit all three methods on the same data and emit a
    /// side-by-side metric report plus diagnostics.
    Compare(TrainArgs),
    /// Summarize transmitted bytes and reduction factors across runs.
    PayloadReport(PayloadArgs),
}

/// Flags shared by `train` and `compare`.
#[derive(Args, Clone)]
struct TrainArgs {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Numeric CSV with a header row; omit to use the synthetic
    /// generator.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gen_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Uniform embedding width per edge.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Feature partition: `uniform:N` or explicit widths like `4,7,9`.
    #[arg(long)]
    silos: Option<String>,
    /// Divergence form: `standard` or `paper`.
    #[arg(long)]
    kl_form: Option<String>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    lr_edge_enc: Option<f64>,
    #[arg(long)]
    lr_edge_dec: Option<f64>,
    #[arg(long)]
    lr_server_enc: Option<f64>,
    #[arg(long)]
    lr_server_dec: Option<f64>,
    #[arg(long)]
    edge_hidden: Option<usize>,
    #[arg(long)]
    server_hidden: Option<usize>,
    #[arg(long)]
    synth_nodes: Option<usize>,
    #[arg(long)]
    synth_horizon: Option<usize>,
    #[arg(long)]
    synth_samples: Option<usize>,
    #[arg(long)]
    synth_rho: Option<f64>,
    /// Generation runs for `compare`.
    #[arg(long)]
    runs: Option<usize>,
    /// Scenarios per generation run for `compare`.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, env = "SPLITVAE_OUT")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    gen_seed: Option<u64>,
    #[arg(long, env = "SPLITVAE_OUT")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Re-generate from this manifest for `--runs` repetitions.
    #[arg(long, conflicts_with_all = ["observed", "generated"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    gen_seed: Option<u64>,
    /// Observed CSV for single-shot static evaluation.
    #[arg(long, requires = "generated")]
    observed: Option<PathBuf>,
    /// Generated CSVs, concatenated column-wise in the given order.
    #[arg(long, num_args = 1.., requires = "observed")]
    generated: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SPLITVAE_OUT")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PayloadArgs {
    /// One or more run manifests (one row per run).
    #[arg(long, num_args = 1..)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SPLITVAE_OUT")]
    out_dir: Option<PathBuf>,
}

/// Optional TOML config mirroring the flag surface.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    gen_seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    latent_dim: Option<usize>,
    embed_dim: Option<usize>,
    silos: Option<String>,
    kl_form: Option<String>,
    train_frac: Option<f64>,
    lr_edge_enc: Option<f64>,
    lr_edge_dec: Option<f64>,
    lr_server_enc: Option<f64>,
    lr_server_dec: Option<f64>,
    edge_hidden: Option<usize>,
    server_hidden: Option<usize>,
    data: Option<PathBuf>,
    runs: Option<usize>,
    count: Option<usize>,
    out_dir: Option<PathBuf>,
    synth: Option<SynthFileConfig>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFileConfig {
    nodes: Option<usize>,
    horizon: Option<usize>,
    samples: Option<usize>,
    rho: Option<f64>,
}

/// Fully resolved settings: defaults, then file, then flags.
struct Resolved {
    data_spec: DataSpec,
    config: TrainConfig,
    gen_seed: u64,
    runs: usize,
    count: usize,
    out_dir: PathBuf,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("--config {}: {}", path.display(), e))
            })?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("--config {}: {}", path.display(), e)))
        }
    }
}

fn resolve(args: &TrainArgs) -> Result<Resolved, Error> {
    let file = load_file_config(&args.config)?;
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let gen_seed = args
        .gen_seed
        .or(file.gen_seed)
        .unwrap_or_else(|| seed.wrapping_add(1));
    let synth_file = file.synth.unwrap_or_default();

    let data = args.data.clone().or(file.data);
    let source = match data {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "--data {}: file not found",
                    path.display()
                )));
            }
            DataSource::Csv { path }
        }
        None => DataSource::Synthetic(SynthConfig::new(
            args.synth_nodes.or(synth_file.nodes).unwrap_or(4),
            args.synth_horizon.or(synth_file.horizon).unwrap_or(12),
            args.synth_samples.or(synth_file.samples).unwrap_or(400),
            seed,
            args.synth_rho.or(synth_file.rho).unwrap_or(0.6),
        )),
    };

    let silo_text = args
        .silos
        .clone()
        .or(file.silos)
        .unwrap_or_else(|| "uniform:2".to_string());
    let silos: SiloSpec = silo_text.parse()?;
    let n_edges = match &silos {
        SiloSpec::Uniform(n) => *n,
        SiloSpec::Explicit(dims) => dims.len(),
    };

    let kl_form: KlForm = match args.kl_form.clone().or(file.kl_form) {
        Some(text) => text.parse()?,
        None => KlForm::Standard,
    };

    let embed_dim = args.embed_dim.or(file.embed_dim).unwrap_or(8);
    let latent_dim = args.latent_dim.or(file.latent_dim).unwrap_or(4);
    let config = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(50),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(32),
        seed,
        latent_dim,
        embed_dims: vec![embed_dim; n_edges],
        lr_edge_encoder: args.lr_edge_enc.or(file.lr_edge_enc).unwrap_or(1e-2),
        lr_edge_decoder: args.lr_edge_dec.or(file.lr_edge_dec).unwrap_or(1e-2),
        lr_server_encoder: args.lr_server_enc.or(file.lr_server_enc).unwrap_or(1e-2),
        lr_server_decoder: args.lr_server_dec.or(file.lr_server_dec).unwrap_or(1e-2),
        kl_form,
        edge_hidden: args.edge_hidden.or(file.edge_hidden).unwrap_or(64),
        server_hidden: args.server_hidden.or(file.server_hidden).unwrap_or(128),
        collective_timeout_secs: 30,
    };
    config.validate()?;

    let data_spec = DataSpec {
        source,
        silos,
        train_frac: args.train_frac.or(file.train_frac).unwrap_or(0.8),
        structure_hint: None,
    };
    Ok(Resolved {
        data_spec,
        config,
        gen_seed,
        runs: args.runs.or(file.runs).unwrap_or(100),
        count: args.count.or(file.count).unwrap_or(200),
        out_dir: args
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("splitvae-out")),
    })
}

fn default_out_dir(dir: &Option<PathBuf>) -> PathBuf {
    dir.clone().unwrap_or_else(|| PathBuf::from("splitvae-out"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            let resolved = resolve(&args)?;
            let manifest = run_train(
                &resolved.out_dir,
                &resolved.data_spec,
                &resolved.config,
                Some(resolved.gen_seed),
            )?;
            println!(
                "trained {} epochs over {} edges; artifacts in {}",
                resolved.config.epochs,
                resolved.config.n_edges(),
                resolved.out_dir.display()
            );
            if let Some(ledger) = &manifest.ledger {
                println!(
                    "transmitted {} bytes/epoch vs {} raw (reduction factor {:.3})",
                    ledger.per_epoch_bytes, ledger.raw_bytes, ledger.reduction_factor
                );
            }
            Ok(())
        }
        Command::Generate(args) => {
            let manifest = splitvae::pipeline::RunManifest::load(&args.manifest)?;
            let gen_seed = args
                .gen_seed
                .or(manifest.gen_seed)
                .unwrap_or_else(|| manifest.seed.wrapping_add(1));
            let out_dir = default_out_dir(&args.out_dir);
            let paths = run_generate(&args.manifest, args.count, gen_seed, &out_dir)?;
            println!(
                "wrote {} scenario files ({} rows each) to {}",
                paths.len(),
                args.count,
                out_dir.display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| default_out_dir(&args.out_dir).join("evaluation.csv"));
            let input = match (&args.manifest, &args.observed) {
                (Some(manifest_path), None) => {
                    let manifest = splitvae::pipeline::RunManifest::load(manifest_path)?;
                    let gen_seed = args
                        .gen_seed
                        .or(manifest.gen_seed)
                        .unwrap_or_else(|| manifest.seed.wrapping_add(1));
                    EvaluateInput::Manifest {
                        manifest_path: manifest_path.clone(),
                        runs: args.runs.unwrap_or(100),
                        count: args.count.unwrap_or(200),
                        gen_seed,
                    }
                }
                (None, Some(observed)) => EvaluateInput::Static {
                    observed: observed.clone(),
                    generated: args.generated.clone(),
                },
                _ => {
                    return Err(Error::Config(
                        "evaluate needs either --manifest or --observed/--generated".into(),
                    ))
                }
            };
            let report = run_evaluate(&input, &out)?;
            println!(
                "fid {:.6} es {:.6} rmse {:.6} crps {:.6} ({} runs) -> {}",
                report.fid.mean,
                report.es.mean,
                report.rmse.mean,
                report.crps.mean,
                report.runs,
                out.display()
            );
            Ok(())
        }
        Command::Compare(args) => {
            let resolved = resolve(&args)?;
            let outcome = run_compare(
                &resolved.out_dir,
                &resolved.data_spec,
                &resolved.config,
                resolved.runs,
                resolved.count,
                resolved.gen_seed,
            )?;
            for (method, report) in &outcome.reports {
                println!(
                    "{:<12} fid {:.6} es {:.6} rmse {:.6} crps {:.6}",
                    method, report.fid.mean, report.es.mean, report.rmse.mean, report.crps.mean
                );
            }
            println!("report: {}", outcome.metrics_csv.display());
            Ok(())
        }
        Command::PayloadReport(args) => {
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| default_out_dir(&args.out_dir).join("payload_report.csv"));
            run_payload_report(&args.manifest, &out)?;
            println!("payload report: {}", out.display());
            Ok(())
        }
    }
}

/// Exit codes: 0 success, 2 usage/config/data errors, 3 runtime numeric
/// or protocol failures.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_)
        | Error::Data(_)
        | Error::Parse { .. }
        | Error::State(_)
        | Error::Io(_)
        | Error::Serde(_)
        | Error::InsufficientSamples { .. } => 2,
        Error::Dimension(_)
        | Error::NotPsd { .. }
        | Error::Numeric(_)
        | Error::Protocol(_)
        | Error::ProtocolOrder(_)
        | Error::CollectiveTimeout { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error);
            ExitCode::from(exit_code_for(&error))
        }
    }
}
