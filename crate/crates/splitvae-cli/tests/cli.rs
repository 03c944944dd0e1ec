//! Command-level tests through the real binary: flag handling, exit
//! codes, emitted files, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn splitvae(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitvae"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPLITVAE_OUT")
        .output()
        .expect("binary runs")
}

fn tiny_train_args<'a>(out_dir: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "train",
        "--epochs",
        "3",
        "--synth-nodes",
        "3",
        "--synth-horizon",
        "4",
        "--synth-samples",
        "60",
        "--batch-size",
        "12",
        "--embed-dim",
        "3",
        "--latent-dim",
        "2",
        "--edge-hidden",
        "6",
        "--server-hidden",
        "8",
        "--out-dir",
        out_dir,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn default_synthetic_train_completes_with_one_loss_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(&["train", "--out-dir", "out"], dir.path());
    assert_eq!(output.status.code(), Some(0), "{:?}", output);
    let losses = std::fs::read_to_string(dir.path().join("out/losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 51); // header + default 50 epochs
}

#[test]
fn missing_data_path_exits_2_and_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(
        &["train", "--data", "does-not-exist.csv", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--data"), "stderr: {}", stderr);
}

#[test]
fn train_emits_artifacts_and_loss_rows_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(&tiny_train_args("out", &[]), dir.path());
    assert_eq!(output.status.code(), Some(0));
    for file in ["run.json", "server.ckpt", "rank1.ckpt", "rank2.ckpt", "losses.csv", "ledger.csv"]
    {
        assert!(dir.path().join("out").join(file).exists(), "missing {}", file);
    }
    let losses = std::fs::read_to_string(dir.path().join("out/losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4); // header + 3 epochs
}

#[test]
fn zero_epoch_train_still_writes_manifest_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(
        &[
            "train",
            "--epochs",
            "0",
            "--synth-nodes",
            "3",
            "--synth-horizon",
            "4",
            "--synth-samples",
            "60",
            "--batch-size",
            "12",
            "--embed-dim",
            "3",
            "--latent-dim",
            "2",
            "--edge-hidden",
            "6",
            "--server-hidden",
            "8",
            "--out-dir",
            "zero",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0));
    assert!(dir.path().join("zero/run.json").exists());
    assert!(dir.path().join("zero/server.ckpt").exists());
    assert!(!dir.path().join("zero/losses.csv").exists());
}

#[test]
fn generate_is_deterministic_and_handles_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        splitvae(&tiny_train_args("out", &[]), dir.path()).status.code(),
        Some(0)
    );
    let manifest = "out/run.json";
    let g1 = splitvae(
        &[
            "generate", "--manifest", manifest, "--count", "50", "--gen-seed", "5", "--out-dir",
            "g1",
        ],
        dir.path(),
    );
    assert_eq!(g1.status.code(), Some(0));
    let g2 = splitvae(
        &[
            "generate", "--manifest", manifest, "--count", "50", "--gen-seed", "5", "--out-dir",
            "g2",
        ],
        dir.path(),
    );
    assert_eq!(g2.status.code(), Some(0));
    for rank in 1..=2 {
        let a = std::fs::read(dir.path().join(format!("g1/scenarios_rank{}.csv", rank))).unwrap();
        let b = std::fs::read(dir.path().join(format!("g2/scenarios_rank{}.csv", rank))).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 51);
    }

    let empty = splitvae(
        &[
            "generate", "--manifest", manifest, "--count", "0", "--out-dir", "g0",
        ],
        dir.path(),
    );
    assert_eq!(empty.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("g0/scenarios_rank1.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn generate_missing_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(
        &[
            "generate",
            "--manifest",
            "nowhere/run.json",
            "--count",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn evaluate_static_identical_files_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "a,b\n0.1,0.9\n0.4,0.3\n0.8,0.2\n0.5,0.6\n";
    std::fs::write(dir.path().join("obs.csv"), csv).unwrap();
    let output = splitvae(
        &[
            "evaluate",
            "--observed",
            "obs.csv",
            "--generated",
            "obs.csv",
            "--out",
            "eval.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0));
    let report = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let mut fid_mean = None;
    let mut rmse_mean = None;
    for line in report.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        match cells[1] {
            "fid" => fid_mean = Some(cells[2].parse::<f64>().unwrap()),
            "rmse" => rmse_mean = Some(cells[2].parse::<f64>().unwrap()),
            _ => {}
        }
        assert_eq!(cells[4], "1"); // single run
        assert_eq!(cells[3].parse::<f64>().unwrap(), 0.0); // std
    }
    assert!(fid_mean.unwrap() < 1e-8);
    assert_eq!(rmse_mean.unwrap(), 0.0);
}

#[test]
fn evaluate_width_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obs.csv"), "a,b\n1,2\n3,4\n").unwrap();
    std::fs::write(dir.path().join("gen.csv"), "a\n1\n2\n").unwrap();
    let output = splitvae(
        &[
            "evaluate",
            "--observed",
            "obs.csv",
            "--generated",
            "gen.csv",
            "--out",
            "eval.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn evaluate_from_manifest_matches_library_metrics() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        splitvae(&tiny_train_args("out", &[]), dir.path()).status.code(),
        Some(0)
    );
    let output = splitvae(
        &[
            "evaluate",
            "--manifest",
            "out/run.json",
            "--runs",
            "2",
            "--count",
            "10",
            "--gen-seed",
            "9",
            "--out",
            "eval.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0));

    // Direct library call with the same inputs.
    let report = splitvae::pipeline::run_evaluate(
        &splitvae::pipeline::EvaluateInput::Manifest {
            manifest_path: dir.path().join("out/run.json"),
            runs: 2,
            count: 10,
            gen_seed: 9,
        },
        &dir.path().join("eval_lib.csv"),
    )
    .unwrap();
    let cli_text = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let lib_text = std::fs::read_to_string(dir.path().join("eval_lib.csv")).unwrap();
    assert_eq!(cli_text, lib_text);
    assert!(report.fid.mean.is_finite());
}

#[test]
fn payload_report_missing_ledger_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(
        &[
            "train",
            "--epochs",
            "0",
            "--synth-nodes",
            "3",
            "--synth-horizon",
            "4",
            "--synth-samples",
            "60",
            "--batch-size",
            "12",
            "--embed-dim",
            "3",
            "--latent-dim",
            "2",
            "--edge-hidden",
            "6",
            "--server-hidden",
            "8",
            "--out-dir",
            "zero",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0));
    let output = splitvae(
        &[
            "payload-report",
            "--manifest",
            "zero/run.json",
            "--out",
            "payload.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn config_file_is_honored_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
epochs = 2
batch_size = 12
latent_dim = 2
embed_dim = 3
silos = "uniform:3"
edge_hidden = 6
server_hidden = 8
out_dir = "from-file"

[synth]
nodes = 3
horizon = 4
samples = 60
"#,
    )
    .unwrap();
    let output = splitvae(&["train", "--config", "run.toml"], dir.path());
    assert_eq!(output.status.code(), Some(0), "{:?}", output);
    assert!(dir.path().join("from-file/rank3.ckpt").exists());

    // Flag overrides the file's out_dir and epochs.
    let output = splitvae(
        &[
            "train",
            "--config",
            "run.toml",
            "--epochs",
            "1",
            "--out-dir",
            "from-flag",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0));
    let losses = std::fs::read_to_string(dir.path().join("from-flag/losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 2);
}

#[test]
fn compare_smoke_runs_and_reports_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let output = splitvae(
        &[
            "compare",
            "--epochs",
            "2",
            "--synth-nodes",
            "3",
            "--synth-horizon",
            "4",
            "--synth-samples",
            "80",
            "--batch-size",
            "16",
            "--embed-dim",
            "3",
            "--latent-dim",
            "2",
            "--edge-hidden",
            "6",
            "--server-hidden",
            "8",
            "--runs",
            "2",
            "--count",
            "10",
            "--out-dir",
            "cmp",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(0), "{:?}", output);
    let text = std::fs::read_to_string(dir.path().join("cmp/metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
    for method in ["splitvae", "central_vae", "copula"] {
        for metric in ["fid", "es", "rmse", "crps"] {
            assert!(text.contains(&format!("{},{},", method, metric)));
        }
    }
}
