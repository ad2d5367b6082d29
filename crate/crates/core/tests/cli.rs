use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fracae::checkpoint::Checkpoint;

fn fracae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracae"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run fracae")
}

fn ok(args: &[&str]) -> String {
    let out = fracae(args);
    assert!(
        out.status.success(),
        "fracae {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn small_end_to_end_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let models = root.join("models");
    let cfg = root.join("run.toml");
    // File says 8 signals; the flag below wins.
    fs::write(
        &cfg,
        "n_signals = 8\nlength = 600\nsnr_db = 3.0\nepochs = 2\ntrain_fragments = 64\nbatch_size = 16\ncompression = \"post-training\"\n",
    )
    .unwrap();

    ok(&[
        "gen-data",
        "--out",
        s(&data),
        "--config",
        s(&cfg),
        "--n-signals",
        "10",
        "--seed",
        "4",
    ]);
    let noisy = fs::read_to_string(data.join("noisy.csv")).unwrap();
    assert_eq!(noisy.lines().count(), 10);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let signals = manifest["signals"].as_array().unwrap();
    assert_eq!(signals.len(), 10);
    for sig in signals {
        assert!((sig["measured_snr_db"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    }
    let resolved = fs::read_to_string(data.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("n_signals = 10"), "{resolved}");
    assert!(resolved.contains("snr_db = 3.0"), "{resolved}");

    // Same seed, same bytes.
    let again = root.join("again");
    ok(&[
        "gen-data",
        "--out",
        s(&again),
        "--config",
        s(&cfg),
        "--n-signals",
        "10",
        "--seed",
        "4",
    ]);
    assert_eq!(noisy, fs::read_to_string(again.join("noisy.csv")).unwrap());

    let cache = root.join("features.bin");
    let summary = ok(&[
        "train",
        "--in",
        s(&data),
        "--out",
        s(&models),
        "--config",
        s(&cfg),
        "--alpha-grid",
        "1.0,1.3",
        "--feature-cache",
        s(&cache),
    ]);
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(cache.exists());
    for tag in ["1.00", "1.30"] {
        let ckpt = Checkpoint::load(&models.join(format!("model_alpha{tag}.ckpt"))).unwrap();
        assert_eq!(ckpt.frac.epochs, 2);
        assert_eq!(ckpt.frac.batch_size, 16);
        assert_eq!(ckpt.test_signals.len(), 2);
        assert_eq!(ckpt.ranks.as_ref().map(Vec::len), Some(3));
        let curve = fs::read_to_string(models.join(format!("loss_alpha{tag}.csv"))).unwrap();
        assert_eq!(curve.lines().count(), 3);
    }
    let resolved = fs::read_to_string(models.join("resolved_config.toml")).unwrap();
    assert!(
        resolved.contains("compression = \"post-training\""),
        "{resolved}"
    );

    // A second run reuses the cache and reproduces the checkpoint exactly.
    let models2 = root.join("models2");
    ok(&[
        "train",
        "--in",
        s(&data),
        "--out",
        s(&models2),
        "--config",
        s(&cfg),
        "--alpha",
        "1.3",
        "--feature-cache",
        s(&cache),
    ]);
    assert_eq!(
        fs::read(models.join("model_alpha1.30.ckpt")).unwrap(),
        fs::read(models2.join("model_alpha1.30.ckpt")).unwrap()
    );

    let ckpt = models.join("model_alpha1.30.ckpt");
    let denoised = root.join("out/denoised.csv");
    ok(&[
        "denoise",
        "--checkpoint",
        s(&ckpt),
        "--in",
        s(&data.join("noisy.csv")),
        "--out",
        s(&denoised),
    ]);
    let rows: Vec<usize> = fs::read_to_string(&denoised)
        .unwrap()
        .lines()
        .map(|l| l.split(',').count())
        .collect();
    assert_eq!(rows, vec![600; 10]);

    let eval_dir = root.join("eval");
    let agg = ok(&[
        "evaluate",
        "--checkpoint",
        s(&ckpt),
        "--in",
        s(&data),
        "--out",
        s(&eval_dir),
    ]);
    assert!(
        agg.starts_with("alpha,n_fragments,input_snr_db,input_cc,snr_db,cc,prd,rmse\n1.30,4,"),
        "{agg}"
    );
    let per = fs::read_to_string(eval_dir.join("evaluation_alpha1.30_fragments.csv")).unwrap();
    assert_eq!(per.lines().count(), 5);

    let comp = root.join("comp");
    ok(&[
        "compress",
        "--checkpoint",
        s(&models),
        "--in",
        s(&data),
        "--out",
        s(&comp),
        "--alpha-grid",
        "1.3",
        "--compress-layer",
        "fc,conv3",
        "--cr-grid",
        "0:0.5:0.25",
    ]);
    let metrics = fs::read_to_string(comp.join("compression_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3, "{metrics}");
    assert!(metrics.lines().skip(1).all(|l| l.starts_with("1.30,")));
    let baseline = fs::read_to_string(comp.join("compression_baseline.csv")).unwrap();
    assert_eq!(baseline.lines().count(), 2);
}

#[test]
fn evaluating_clean_input_caps_snr() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    ok(&[
        "gen-data",
        "--out",
        s(&data),
        "--n-signals",
        "5",
        "--length",
        "500",
    ]);
    let models = root.join("m");
    ok(&[
        "train",
        "--in",
        s(&data),
        "--out",
        s(&models),
        "--epochs",
        "1",
        "--train-fragments",
        "32",
        "--compression",
        "none",
    ]);
    // Clean-as-noisy corpus: the input side of the table is a perfect match.
    fs::copy(data.join("clean.csv"), data.join("noisy.csv")).unwrap();
    let agg = ok(&[
        "evaluate",
        "--checkpoint",
        s(&models.join("model_alpha1.20.ckpt")),
        "--in",
        s(&data),
    ]);
    let row: Vec<f64> = agg
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[2], 300.0);
    assert!((row[3] - 1.0).abs() < 1e-12);
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("bad.toml");
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    let out = fracae(&["gen-data", "--out", s(&root.join("d")), "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let junk = root.join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let out = fracae(&[
        "denoise",
        "--checkpoint",
        s(&junk),
        "--in",
        s(&junk),
        "--out",
        s(&root.join("o.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));

    let out = fracae(&[
        "train",
        "--in",
        s(root),
        "--out",
        s(&root.join("m")),
        "--alpha",
        "2.5",
    ]);
    assert!(!out.status.success());
}
