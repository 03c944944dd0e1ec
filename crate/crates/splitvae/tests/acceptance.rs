//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with its key measurements. Criteria cover split/monolithic
//! equivalence, gradient fidelity, convergence, statistical fidelity
//! against the centralized baseline, copula sanity, metric oracles, data
//! movement accounting, data locality, dimensional heterogeneity, and
//! byte-level determinism.

#![allow(clippy::needless_range_loop)]

mod common;

use std::time::Instant;

use common::{max_abs_gap, uniform_silo, LearningRates, MonolithicModel};
use splitvae::baselines::CopulaModel;
use splitvae::datasets::{normalize, partition_silos, synth_generate, SiloSpec, SynthConfig};
use splitvae::metrics::{crps, energy_score, fid, rmse};
use splitvae::nn::{
    bc_loss, bc_loss_grad, kl_loss, kl_loss_grad, reparametrize_backward,
    reparametrize_with_noise, Activation, KlForm, LatentStats, MlpStack,
};
use splitvae::numerics::{RngStream, Tensor};
use splitvae::pipeline::{prepare_data, run_compare, DataSource, DataSpec};
use splitvae::protocol::{build_agents, train, TrainConfig};

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// One split step vs one monolithic step for explicit silo widths.
/// Returns the largest parameter gap observed.
fn equivalence_gap(silo_widths: &[usize], batch: usize, latent: usize, seed: u64) -> f64 {
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: batch,
        edge_hidden: 6,
        server_hidden: 10,
        collective_timeout_secs: 10,
        lr_edge_encoder: 3e-2,
        lr_edge_decoder: 2e-2,
        lr_server_encoder: 1.5e-2,
        lr_server_decoder: 2.5e-2,
        ..TrainConfig::new(silo_widths.len(), 3, latent, seed)
    };
    let silos: Vec<Tensor> = silo_widths
        .iter()
        .enumerate()
        .map(|(i, &w)| uniform_silo(seed + i as u64, batch, w))
        .collect();
    let (edges, server) = build_agents(&silos, &cfg).unwrap();

    let mut oracle = MonolithicModel::from_agents(&edges, &server, cfg.kl_form);
    let mut noise_rng = server.noise_rng();
    let noise = noise_rng.standard_normal(&[batch, latent]);
    let batches: Vec<Tensor> = edges
        .iter()
        .map(|e| e.batch_rows(0, batch).unwrap())
        .collect();
    oracle.sgd_step(&batches, &noise, &LearningRates::from_config(&cfg));

    let outcome = train(edges, server, &cfg).unwrap();
    let mut gap: f64 = 0.0;
    for (i, agent) in outcome.edges.iter().enumerate() {
        gap = gap.max(max_abs_gap(
            &agent.encoder.flat_params(),
            &oracle.edge_encoders[i].flat_params(),
        ));
        gap = gap.max(max_abs_gap(
            &agent.decoder.flat_params(),
            &oracle.edge_decoders[i].flat_params(),
        ));
    }
    gap = gap.max(max_abs_gap(
        &outcome.server.encoder.flat_params(),
        &oracle.server_encoder.flat_params(),
    ));
    gap.max(max_abs_gap(
        &outcome.server.decoder.flat_params(),
        &oracle.server_decoder.flat_params(),
    ))
}

#[test]
fn c01_split_matches_monolithic_step() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for widths in [vec![5usize], vec![4, 7], vec![4, 7, 9]] {
        for batch in [1usize, 4] {
            for latent in [2usize, 4] {
                let gap = equivalence_gap(&widths, batch, latent, 60 + batch as u64);
                assert!(
                    gap < 1e-9,
                    "gap {} for widths {:?}, B={}, s={}",
                    gap,
                    widths,
                    batch,
                    latent
                );
                worst = worst.max(gap);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {:?}", elapsed);
    println!(
        "criterion 1 PASS: split == monolithic within {:.2e} (budget 1e-9), {:?}",
        worst, elapsed
    );
}

#[test]
fn c02_gradient_fidelity_against_finite_differences() {
    let start = Instant::now();
    let mut rng = RngStream::new(500, 0);
    let mut checked = 0usize;

    // Stacks with mixed activations against the cross-entropy.
    for case in 0..20 {
        let widths = match case % 4 {
            0 => vec![3, 5, 2],
            1 => vec![6, 8, 8, 4],
            2 => vec![2, 16, 3],
            _ => vec![4, 4],
        };
        let hidden = if case % 2 == 0 {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        let mut stack = MlpStack::init(&widths, hidden, Activation::Sigmoid, &mut rng).unwrap();
        let batch = 1 + case % 8;
        let input = rng.standard_normal(&[batch, widths[0]]);
        let target = rng.uniform(0.05, 0.95, &[batch, *widths.last().unwrap()]);
        let out = stack.forward(&input).unwrap();
        let grad = bc_loss_grad(&out, &target).unwrap();
        let (_, grads) = stack.backward(&grad).unwrap();

        for layer in 0..widths.len() - 1 {
            let len = grads[layer].weights.len();
            for idx in [0, len / 2, len - 1] {
                let eps = 1e-5;
                let mut plus = stack.clone();
                plus.layers_mut()[layer].weights_mut().data_mut()[idx] += eps;
                let mut minus = stack.clone();
                minus.layers_mut()[layer].weights_mut().data_mut()[idx] -= eps;
                let numeric = (bc_loss(&plus.infer(&input).unwrap(), &target).unwrap()
                    - bc_loss(&minus.infer(&input).unwrap(), &target).unwrap())
                    / (2.0 * eps);
                let analytic = grads[layer].weights.data()[idx];
                // Relu kinks can zero out tiny entries; skip the
                // comparison when both sides vanish.
                if numeric.abs().max(analytic.abs()) > 1e-12 {
                    assert!(
                        relative_gap(numeric, analytic) < 1e-4,
                        "stack grad: numeric {} analytic {}",
                        numeric,
                        analytic
                    );
                    checked += 1;
                }
            }
        }
    }

    // Cross-entropy input gradients.
    for _ in 0..20 {
        let pred = rng.uniform(0.1, 0.9, &[2, 3]);
        let target = rng.uniform(0.0, 1.0, &[2, 3]);
        let grad = bc_loss_grad(&pred, &target).unwrap();
        for idx in 0..pred.len() {
            let mut up = pred.clone();
            up.data_mut()[idx] += 1e-5;
            let mut down = pred.clone();
            down.data_mut()[idx] -= 1e-5;
            let numeric =
                (bc_loss(&up, &target).unwrap() - bc_loss(&down, &target).unwrap()) / 2e-5;
            assert!(relative_gap(numeric, grad.data()[idx]) < 1e-4);
            checked += 1;
        }
    }

    // Divergence gradients in both forms.
    for i in 0..20 {
        let form = if i % 2 == 0 { KlForm::Standard } else { KlForm::Paper };
        let mean = rng.standard_normal(&[2, 3]);
        let log_std = rng.uniform(-1.0, 1.0, &[2, 3]);
        let stats = LatentStats::new(mean.clone(), log_std.clone()).unwrap();
        let (dm, dls) = kl_loss_grad(&stats, form);
        for idx in 0..mean.len() {
            let probe = |mu: &Tensor, ls: &Tensor| {
                kl_loss(&LatentStats::new(mu.clone(), ls.clone()).unwrap(), form)
            };
            let mut up = mean.clone();
            up.data_mut()[idx] += 1e-5;
            let mut down = mean.clone();
            down.data_mut()[idx] -= 1e-5;
            let numeric = (probe(&up, &log_std) - probe(&down, &log_std)) / 2e-5;
            if numeric.abs().max(dm.data()[idx].abs()) > 1e-12 {
                assert!(relative_gap(numeric, dm.data()[idx]) < 1e-4);
            }
            let mut up = log_std.clone();
            up.data_mut()[idx] += 1e-5;
            let mut down = log_std.clone();
            down.data_mut()[idx] -= 1e-5;
            let numeric = (probe(&mean, &up) - probe(&mean, &down)) / 2e-5;
            assert!(relative_gap(numeric, dls.data()[idx]) < 1e-4);
            checked += 2;
        }
    }

    // Reparametrization gradients with frozen noise.
    for _ in 0..20 {
        let mean = rng.standard_normal(&[2, 2]);
        let log_std = rng.uniform(-1.0, 1.0, &[2, 2]);
        let noise = rng.standard_normal(&[2, 2]);
        let mut stats = LatentStats::new(mean.clone(), log_std.clone()).unwrap();
        reparametrize_with_noise(&mut stats, noise.clone()).unwrap();
        let (dm, dls) = reparametrize_backward(&stats, &Tensor::filled(&[2, 2], 1.0)).unwrap();
        let probe = |mu: &Tensor, ls: &Tensor| -> f64 {
            let mut s = LatentStats::new(mu.clone(), ls.clone()).unwrap();
            reparametrize_with_noise(&mut s, noise.clone())
                .unwrap()
                .data()
                .iter()
                .sum()
        };
        for idx in 0..mean.len() {
            let mut up = mean.clone();
            up.data_mut()[idx] += 1e-5;
            let mut down = mean.clone();
            down.data_mut()[idx] -= 1e-5;
            let numeric = (probe(&up, &log_std) - probe(&down, &log_std)) / 2e-5;
            assert!(relative_gap(numeric, dm.data()[idx]) < 1e-4);
            let mut up = log_std.clone();
            up.data_mut()[idx] += 1e-5;
            let mut down = log_std.clone();
            down.data_mut()[idx] -= 1e-5;
            let numeric = (probe(&mean, &up) - probe(&mean, &down)) / 2e-5;
            if numeric.abs().max(dls.data()[idx].abs()) > 1e-12 {
                assert!(relative_gap(numeric, dls.data()[idx]) < 1e-4);
            }
            checked += 2;
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {:?}", elapsed);
    println!(
        "criterion 2 PASS: {} gradient probes within 1e-4 of finite differences, {:?}",
        checked, elapsed
    );
}

/// The criterion-3 dataset: nodes=8, horizon=24, 2000 samples, 4 edges.
fn convergence_dataset() -> (Vec<Tensor>, TrainConfig) {
    let synth = SynthConfig::new(8, 24, 2000, 404, 0.6);
    let (raw, _) = synth_generate(&synth).unwrap();
    let (data, _) = normalize(&raw, None).unwrap();
    let map = partition_silos(192, &SiloSpec::Uniform(4)).unwrap();
    let silos = map.partition(&data).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 32,
        ..TrainConfig::new(4, 12, 8, 404)
    };
    (silos, cfg)
}

#[test]
fn c03_training_converges_on_synthetic_data() {
    let start = Instant::now();
    let (silos, cfg) = convergence_dataset();
    let (edges, server) = build_agents(&silos, &cfg).unwrap();
    let outcome = train(edges, server, &cfg).unwrap();
    assert_eq!(outcome.losses.len(), 50);
    assert!(outcome.losses.iter().all(|l| l.total.is_finite()));
    let first = outcome.losses[0].total;
    let last = outcome.losses[49].total;
    assert!(last < first, "loss did not improve: {} -> {}", first, last);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {:?}", elapsed);
    println!(
        "criterion 3 PASS: epoch-1 loss {:.4} -> epoch-50 loss {:.4}, {:?}",
        first, last, elapsed
    );
}

#[test]
fn c04_statistical_fidelity_tracks_central_baseline() {
    let start = Instant::now();
    let spec = DataSpec {
        source: DataSource::Synthetic(SynthConfig::new(8, 24, 2000, 404, 0.6)),
        silos: SiloSpec::Uniform(4),
        train_frac: 0.8,
        structure_hint: None,
    };
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 32,
        ..TrainConfig::new(4, 12, 8, 404)
    };
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_compare(dir.path(), &spec, &cfg, 100, 400, 405).unwrap();
    let split = &outcome.reports[0].1;
    let central = &outcome.reports[1].1;
    for (name, s, c) in [
        ("fid", split.fid.mean, central.fid.mean),
        ("es", split.es.mean, central.es.mean),
        ("rmse", split.rmse.mean, central.rmse.mean),
        ("crps", split.crps.mean, central.crps.mean),
    ] {
        let gap = (s - c).abs() / c.abs().max(1e-8);
        assert!(
            gap <= 0.5,
            "{}: split {} vs central {} (relative gap {:.3})",
            name,
            s,
            c,
            gap
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 900.0, "took {:?}", elapsed);
    println!(
        "criterion 4 PASS: split vs central over 100 runs - fid {:.4}/{:.4}, es {:.4}/{:.4}, rmse {:.4}/{:.4}, crps {:.4}/{:.4}, {:?}",
        split.fid.mean,
        central.fid.mean,
        split.es.mean,
        central.es.mean,
        split.rmse.mean,
        central.rmse.mean,
        split.crps.mean,
        central.crps.mean,
        elapsed
    );
}

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
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn c05_copula_preserves_marginals_and_rank_correlation() {
    let spec = DataSpec {
        source: DataSource::Synthetic(SynthConfig::new(8, 24, 2000, 404, 0.6)),
        silos: SiloSpec::Uniform(4),
        train_frac: 0.8,
        structure_hint: None,
    };
    let prepared = prepare_data(&spec, 404).unwrap();
    let training = &prepared.train;
    let (m, d) = training.dims2().unwrap();

    let mut copula = CopulaModel::fit(training).unwrap();
    let mut rng = RngStream::new(991, 0);
    let samples = copula.sample(10_000, &mut rng).unwrap();

    let train_cols: Vec<Vec<f64>> = (0..d)
        .map(|c| (0..m).map(|r| training.get(r, c)).collect())
        .collect();
    let sample_cols: Vec<Vec<f64>> = (0..d)
        .map(|c| (0..10_000).map(|r| samples.get(r, c)).collect())
        .collect();

    let mut worst_ks: f64 = 0.0;
    for c in 0..d {
        let ks = ks_statistic(&train_cols[c], &sample_cols[c]);
        assert!(ks < 0.05, "feature {} ks {}", c, ks);
        worst_ks = worst_ks.max(ks);
    }

    let train_ranks: Vec<Vec<f64>> = train_cols.iter().map(|c| midranks(c)).collect();
    let sample_ranks: Vec<Vec<f64>> = sample_cols.iter().map(|c| midranks(c)).collect();
    let mut worst_gap: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let train_rho = pearson(&train_ranks[i], &train_ranks[j]);
            let sample_rho = pearson(&sample_ranks[i], &sample_ranks[j]);
            let gap = (train_rho - sample_rho).abs();
            assert!(
                gap < 0.1,
                "pair ({}, {}): spearman {} vs {}",
                i,
                j,
                train_rho,
                sample_rho
            );
            worst_gap = worst_gap.max(gap);
        }
    }
    println!(
        "criterion 5 PASS: worst KS {:.4} (< 0.05), worst spearman gap {:.4} (< 0.1)",
        worst_ks, worst_gap
    );
}

#[test]
fn c06_metric_oracles() {
    let mut rng = RngStream::new(606, 0);

    let x = rng.standard_normal(&[500, 3]);
    let self_fid = fid(&x, &x).unwrap();
    assert!(self_fid.abs() < 1e-8);

    let a = rng.standard_normal(&[10_000, 1]);
    let b = rng.standard_normal(&[10_000, 1]).map(|v| v + 1.0);
    let shift_fid = fid(&a, &b).unwrap();
    assert!((shift_fid - 1.0).abs() < 0.1);

    let ex = Tensor::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let ey = Tensor::from_rows(&[vec![1.0]]).unwrap();
    let es = energy_score(&ex, &ey).unwrap();
    assert_eq!(es, 0.5);

    let point = Tensor::from_rows(&[vec![2.5]]).unwrap();
    let obs = Tensor::from_rows(&[vec![1.0]]).unwrap();
    assert_eq!(crps(&point, &obs).unwrap(), 1.5);

    assert_eq!(rmse(&x, &x).unwrap(), 0.0);

    println!(
        "criterion 6 PASS: fid(x,x)={:.2e}, 1-d fid {:.4}, es 0.5 exact, crps point-mass exact, rmse(x,x)=0",
        self_fid, shift_fid
    );
}

#[test]
fn c07_payload_ledger_is_exact_and_monotone() {
    let synth = SynthConfig::new(6, 4, 240, 707, 0.5);
    let (raw, _) = synth_generate(&synth).unwrap();
    let (data, _) = normalize(&raw, None).unwrap();
    let map = partition_silos(24, &SiloSpec::Uniform(3)).unwrap();
    let silos = map.partition(&data).unwrap();

    let mut factors = Vec::new();
    for embed in [2usize, 4, 8] {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            edge_hidden: 8,
            server_hidden: 12,
            ..TrainConfig::new(3, embed, 2, 707)
        };
        let (edges, server) = build_agents(&silos, &cfg).unwrap();
        let outcome = train(edges, server, &cfg).unwrap();
        let batches = 240 / 16;
        let per_epoch_expected = (4 * batches * 16 * (3 * embed) * 8) as u64;
        let report = outcome.ledger.report().unwrap();
        assert_eq!(report.per_epoch_bytes, per_epoch_expected);
        assert_eq!(report.total_bytes, per_epoch_expected * 3);
        assert_eq!(report.raw_bytes, (240 * 24 * 8) as u64);
        factors.push((embed, report.reduction_factor));
    }
    assert!(
        factors[0].1 > factors[1].1 && factors[1].1 > factors[2].1,
        "factors not strictly decreasing in embed dim: {:?}",
        factors
    );
    println!(
        "criterion 7 PASS: exact byte accounting; reduction factors {:?}",
        factors
    );
}

#[test]
fn c08_raw_data_never_crosses_the_transport() {
    let synth = SynthConfig::new(5, 4, 160, 808, 0.5);
    let (raw, _) = synth_generate(&synth).unwrap();
    let (data, _) = normalize(&raw, None).unwrap();
    let map = partition_silos(20, &SiloSpec::Explicit(vec![4, 7, 9])).unwrap();
    let silos = map.partition(&data).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        edge_hidden: 8,
        server_hidden: 12,
        ..TrainConfig::new(3, 3, 2, 808)
    };
    let (edges, server) = build_agents(&silos, &cfg).unwrap();
    let outcome = train(edges, server, &cfg).unwrap();
    let expected_transfers = 3 * (160 / 16) * 4 * 3; // epochs x batches x phases x edges
    assert_eq!(outcome.transfers.len(), expected_transfers);
    for record in &outcome.transfers {
        assert_eq!(
            record.cols, 3,
            "payload width {} is not the embedding width",
            record.cols
        );
        assert!(
            ![4usize, 7, 9].contains(&record.cols),
            "silo-width payload crossed the transport"
        );
    }
    println!(
        "criterion 8 PASS: {} transfers inspected, all embedding-width",
        expected_transfers
    );
}

#[test]
fn c09_heterogeneous_and_uniform_partitions_behave_identically() {
    // Criterion 1 unchanged at both partition layouts.
    for widths in [vec![4usize, 7, 9], vec![5, 5, 5, 5]] {
        for batch in [1usize, 4] {
            let gap = equivalence_gap(&widths, batch, 2, 900 + batch as u64);
            assert!(gap < 1e-9, "gap {} for widths {:?}", gap, widths);
        }
    }

    // Criterion 3 unchanged: both partitions of the same d=20 synthetic
    // dataset converge.
    let synth = SynthConfig::new(5, 4, 2000, 909, 0.6);
    let (raw, _) = synth_generate(&synth).unwrap();
    let (data, _) = normalize(&raw, None).unwrap();
    let mut improvements = Vec::new();
    for spec in [
        SiloSpec::Explicit(vec![4, 7, 9]),
        SiloSpec::Explicit(vec![5, 5, 5, 5]),
    ] {
        let map = partition_silos(20, &spec).unwrap();
        let silos = map.partition(&data).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 32,
            edge_hidden: 16,
            server_hidden: 32,
            ..TrainConfig::new(map.n_edges(), 3, 4, 909)
        };
        let (edges, server) = build_agents(&silos, &cfg).unwrap();
        let outcome = train(edges, server, &cfg).unwrap();
        assert!(outcome.losses.iter().all(|l| l.total.is_finite()));
        assert!(
            outcome.losses[49].total < outcome.losses[0].total,
            "{:?}: {} -> {}",
            map.dims(),
            outcome.losses[0].total,
            outcome.losses[49].total
        );
        improvements.push((
            map.dims().to_vec(),
            outcome.losses[0].total,
            outcome.losses[49].total,
        ));
    }
    println!(
        "criterion 9 PASS: equivalence and convergence hold for {:?}",
        improvements
    );
}

#[test]
fn c10_compare_runs_are_byte_identical() {
    let spec = DataSpec {
        source: DataSource::Synthetic(SynthConfig::new(4, 6, 300, 1010, 0.5)),
        silos: SiloSpec::Uniform(2),
        train_frac: 0.8,
        structure_hint: None,
    };
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 24,
        edge_hidden: 12,
        server_hidden: 16,
        ..TrainConfig::new(2, 4, 3, 1010)
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_compare(dir_a.path(), &spec, &cfg, 5, 40, 2020).unwrap();
    run_compare(dir_b.path(), &spec, &cfg, 5, 40, 2020).unwrap();
    for file in [
        "metrics.csv",
        "losses.csv",
        "ledger.csv",
        "central_vae_losses.csv",
        "centroid_splitvae.csv",
        "centroid_central_vae.csv",
        "centroid_copula.csv",
        "autocorr_splitvae.csv",
    ] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{} differs between identical-seed runs", file);
    }
    println!("criterion 10 PASS: identical-seed compare runs emit byte-identical CSVs");
}
