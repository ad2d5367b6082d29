//! Command-line front end: data generation, training, denoising, evaluation
//! and compression sweeps. Every command writes its resolved configuration
//! next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{fingerprint, Checkpoint, FeatureCache};
use crate::compression::{
    default_cr_grid, optimize_layer, sweep, CompressionLayer, CompressionReport, LayerRank,
};
use crate::datapipe::{
    read_signals, synth_clean, synth_noise, tile_fragments, write_signals, Signal, SynthConfig,
    DEFAULT_FRAGMENT_LEN, DEFAULT_SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::fractional::{FracConfig, DEFAULT_EPSILON_FLOOR};
use crate::metrics::{mean, snr, MetricSet};
use crate::network::{ArchSpec, InitScheme, NetworkParams};
use crate::pipeline::{
    build_dataset, input_metrics, mix_corpus, pair_signals, Dataset, DatasetConfig, Denoiser,
};
use crate::tchebichef::TchebichefBasis;
use crate::train::{loss_curve_csv, train_from, CompressionMode, TrainConfig};

pub const CLEAN_FILE: &str = "clean.csv";
pub const NOISY_FILE: &str = "noisy.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Parser, Debug)]
#[command(
    name = "fracae",
    version,
    about = "Fractional-order CNN autoencoder for signal denoising in the Tchebichef moment domain"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate (or ingest) clean signals and mix them with noise.
    GenData(GenDataArgs),
    /// Train one model per fractional order.
    Train(TrainArgs),
    /// Denoise every signal in a file.
    Denoise(DenoiseArgs),
    /// Score a checkpoint on its held-out signals.
    Evaluate(EvaluateArgs),
    /// Layer-wise low-rank compression sweep.
    Compress(CompressArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target mixture SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub n_signals: Option<usize>,
    /// Samples per synthetic signal.
    #[arg(long)]
    pub length: Option<usize>,
    /// Hz; applies to synthetic and ingested signals.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Clean signals to ingest (one per line) instead of synthesising them.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Noise recordings to mix in instead of the synthetic surrogate.
    #[arg(long)]
    pub noise_in: Option<PathBuf>,
    /// Noise sample rate when it differs from the clean rate.
    #[arg(long)]
    pub noise_sample_rate: Option<f64>,
    /// TOML file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Corpus directory holding clean.csv and noisy.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma list or start:stop:step, e.g. 1.0:1.5:0.1.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fragment_len: Option<usize>,
    /// Random-offset training fragments to draw.
    #[arg(long)]
    pub train_fragments: Option<usize>,
    /// per-epoch, post-training or none.
    #[arg(long)]
    pub compression: Option<String>,
    /// Layers for the optimized-rank pass: comma list of conv2, conv3, fc.
    #[arg(long)]
    pub compress_layer: Option<String>,
    /// Weight initialisation: he or glorot.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Binary cache of prepared features; reused when inputs and settings match.
    #[arg(long)]
    pub feature_cache: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Noisy signals, one per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file for the denoised signals.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus directory holding clean.csv and noisy.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory for the metric tables; stdout only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score every signal instead of the checkpoint's held-out ones.
    #[arg(long)]
    pub all_signals: bool,
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct CompressArgs {
    /// Checkpoint file, or a directory of *.ckpt files.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only sweep checkpoints trained at these orders.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    /// Comma list of conv2, conv3, fc.
    #[arg(long)]
    pub compress_layer: Option<String>,
    /// Compression rates; comma list or start:stop:step.
    #[arg(long)]
    pub cr_grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a `--config` TOML file. Flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub snr_db: Option<f64>,
    pub n_signals: Option<usize>,
    pub length: Option<usize>,
    pub sample_rate: Option<f64>,
    pub noise_sample_rate: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon_floor: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub fragment_len: Option<usize>,
    pub train_fragments: Option<usize>,
    pub compression: Option<String>,
    pub compress_layer: Option<Vec<String>>,
    pub init: Option<String>,
    pub cr_grid: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// `a,b,c` or `start:stop:step` (inclusive, values rounded to 1e-9).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Config(format!("bad grid '{spec}': {what}"));
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("'{t}' is not a number")))
    };
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        spec.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(values)
}

fn parse_layers(items: &[String]) -> Result<Vec<CompressionLayer>> {
    let mut out = Vec::new();
    for item in items.iter().flat_map(|s| s.split(',')) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let layer: CompressionLayer = item.parse()?;
        if !out.contains(&layer) {
            out.push(layer);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no compression layers given".into()));
    }
    Ok(out)
}

fn layers_from(flag: Option<&String>, file: Option<&Vec<String>>) -> Result<Vec<CompressionLayer>> {
    match (flag, file) {
        (Some(f), _) => parse_layers(std::slice::from_ref(f)),
        (None, Some(v)) => parse_layers(v),
        (None, None) => Ok(CompressionLayer::ALL.to_vec()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_resolved<T: Serialize>(dir: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value)
        .map_err(|e| Error::Config(format!("cannot serialise config: {e}")))?;
    write_text(&dir.join(RESOLVED_CONFIG_FILE), &text)
}

pub fn alpha_tag(alpha: f64) -> String {
    format!("{alpha:.2}")
}

pub fn checkpoint_name(alpha: f64) -> String {
    format!("model_alpha{}.ckpt", alpha_tag(alpha))
}

pub fn loss_curve_name(alpha: f64) -> String {
    format!("loss_alpha{}.csv", alpha_tag(alpha))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Denoise(a) => cmd_denoise(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Compress(a) => cmd_compress(&a),
    }
}

#[derive(Debug, Serialize)]
pub struct GenDataResolved {
    pub seed: u64,
    pub snr_db: f64,
    pub n_signals: usize,
    pub length: usize,
    pub sample_rate: f64,
    pub noise_sample_rate: f64,
    pub clean_source: String,
    pub noise_source: String,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    id: usize,
    length: usize,
    measured_snr_db: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a GenDataResolved,
    clean_file: &'static str,
    noisy_file: &'static str,
    signals: Vec<ManifestEntry>,
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let snr_db = args.snr_db.or(file.snr_db).unwrap_or(0.0);
    let sample_rate = args
        .sample_rate
        .or(file.sample_rate)
        .unwrap_or(DEFAULT_SAMPLE_RATE);
    let noise_sample_rate = args
        .noise_sample_rate
        .or(file.noise_sample_rate)
        .unwrap_or(sample_rate);
    let mut synth = SynthConfig {
        n_signals: args.n_signals.or(file.n_signals).unwrap_or(200),
        length: args.length.or(file.length).unwrap_or(2000),
        seed,
        sample_rate,
    };

    let (clean, clean_source) = match &args.input {
        Some(path) => (read_signals(path, sample_rate)?, path.display().to_string()),
        None => (
            (0..synth.n_signals)
                .map(|i| synth_clean(&synth, i))
                .collect::<Vec<_>>(),
            "synthetic".to_string(),
        ),
    };
    if clean.is_empty() {
        return Err(Error::Config("no clean signals to mix".into()));
    }
    synth.n_signals = clean.len();
    let (noise, noise_source): (Vec<Signal>, String) = match &args.noise_in {
        Some(path) => (
            read_signals(path, noise_sample_rate)?,
            path.display().to_string(),
        ),
        None => (
            clean
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let cfg = SynthConfig {
                        length: c.len(),
                        ..synth.clone()
                    };
                    synth_noise(&cfg, i)
                })
                .collect(),
            "synthetic".to_string(),
        ),
    };
    let noisy = mix_corpus(&clean, &noise, snr_db, seed)?;

    let resolved = GenDataResolved {
        seed,
        snr_db,
        n_signals: clean.len(),
        length: clean.iter().map(Signal::len).max().unwrap_or(0),
        sample_rate,
        noise_sample_rate,
        clean_source,
        noise_source,
    };
    let signals = clean
        .iter()
        .zip(&noisy)
        .enumerate()
        .map(|(id, (c, n))| {
            Ok(ManifestEntry {
                id,
                length: c.len(),
                measured_snr_db: snr(&c.samples, &n.samples)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&args.out)?;
    write_signals(&args.out.join(CLEAN_FILE), &clean)?;
    write_signals(&args.out.join(NOISY_FILE), &noisy)?;
    let manifest = Manifest {
        config: &resolved,
        clean_file: CLEAN_FILE,
        noisy_file: NOISY_FILE,
        signals,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&args.out.join(MANIFEST_FILE), &json)?;
    write_resolved(&args.out, &resolved)?;
    log::info!(
        "wrote {} signal pairs to {}",
        clean.len(),
        args.out.display()
    );
    Ok(())
}

/// Clean and noisy signals of a corpus directory, plus a fingerprint of both
/// files.
pub fn load_corpus(dir: &Path, sample_rate: f64) -> Result<(Vec<Signal>, Vec<Signal>, u64)> {
    let clean_path = dir.join(CLEAN_FILE);
    let noisy_path = dir.join(NOISY_FILE);
    let clean = read_signals(&clean_path, sample_rate)?;
    let noisy = read_signals(&noisy_path, sample_rate)?;
    let mut bytes = fs::read(&clean_path).map_err(|e| Error::io(&clean_path, e))?;
    bytes.extend(fs::read(&noisy_path).map_err(|e| Error::io(&noisy_path, e))?);
    Ok((clean, noisy, fingerprint(&bytes)))
}

#[derive(Debug, Serialize)]
pub struct TrainResolved {
    pub input: String,
    pub alphas: Vec<f64>,
    pub eta: f64,
    pub lambda: f64,
    pub epsilon_floor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub fragment_len: usize,
    pub train_fragments: usize,
    pub compression: String,
    pub compress_layers: Vec<String>,
    pub init: String,
    pub sample_rate: f64,
}

fn dataset_for(
    input: &Path,
    sample_rate: f64,
    cfg: &DatasetConfig,
    cache: Option<&Path>,
) -> Result<Dataset> {
    let (clean, noisy, print) = load_corpus(input, sample_rate)?;
    if let Some(path) = cache.filter(|p| p.exists()) {
        let c = FeatureCache::load(path)?;
        if c.matches(print, cfg) {
            log::info!("using feature cache {}", path.display());
            return Ok(c.dataset);
        }
        log::warn!("feature cache {} is stale; rebuilding", path.display());
    }
    let pairs = pair_signals(&clean, &noisy)?;
    let basis = TchebichefBasis::cached(cfg.fragment_len)?;
    let dataset = build_dataset(&pairs, &basis, cfg)?;
    if let Some(path) = cache {
        FeatureCache {
            input_fingerprint: print,
            config: *cfg,
            dataset: dataset.clone(),
        }
        .save(path)?;
    }
    Ok(dataset)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = FracConfig::default();
    let alphas = match (&args.alpha_grid, args.alpha, &file.alpha_grid, file.alpha) {
        (Some(g), _, _, _) => parse_grid(g)?,
        (None, Some(a), _, _) => vec![a],
        (None, None, Some(g), _) => g.clone(),
        (None, None, None, Some(a)) => vec![a],
        (None, None, None, None) => vec![defaults.alpha],
    };
    let compression: CompressionMode = args
        .compression
        .as_deref()
        .or(file.compression.as_deref())
        .unwrap_or("per-epoch")
        .parse()?;
    let layers = layers_from(args.compress_layer.as_ref(), file.compress_layer.as_ref())?;
    let init: InitScheme = args
        .init
        .as_deref()
        .or(file.init.as_deref())
        .unwrap_or(InitScheme::default().name())
        .parse()?;
    let resolved = TrainResolved {
        input: args.input.display().to_string(),
        alphas: alphas.clone(),
        eta: args.eta.or(file.eta).unwrap_or(defaults.eta),
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        epsilon_floor: file.epsilon_floor.unwrap_or(DEFAULT_EPSILON_FLOOR),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        fragment_len: args
            .fragment_len
            .or(file.fragment_len)
            .unwrap_or(DEFAULT_FRAGMENT_LEN),
        train_fragments: args
            .train_fragments
            .or(file.train_fragments)
            .unwrap_or(20_000),
        compression: compression.name().to_string(),
        compress_layers: layers.iter().map(|l| l.name().to_string()).collect(),
        init: init.name().to_string(),
        sample_rate: args
            .sample_rate
            .or(file.sample_rate)
            .unwrap_or(DEFAULT_SAMPLE_RATE),
    };
    // Validate every order before spending time on data.
    let fracs: Vec<FracConfig> = alphas
        .iter()
        .map(|&alpha| {
            let f = FracConfig {
                alpha,
                eta: resolved.eta,
                lambda: resolved.lambda,
                epsilon_floor: resolved.epsilon_floor,
                epochs: resolved.epochs,
                batch_size: resolved.batch_size,
                seed: resolved.seed,
            };
            f.validate().map(|_| f)
        })
        .collect::<Result<_>>()?;

    ensure_dir(&args.out)?;
    write_resolved(&args.out, &resolved)?;
    let ds_cfg = DatasetConfig {
        fragment_len: resolved.fragment_len,
        train_fragments: resolved.train_fragments,
        seed: resolved.seed,
    };
    let dataset = dataset_for(
        &args.input,
        resolved.sample_rate,
        &ds_cfg,
        args.feature_cache.as_deref(),
    )?;
    let arch = ArchSpec::standard(resolved.fragment_len);
    let basis = TchebichefBasis::cached(resolved.fragment_len)?;
    let baseline = mean(&input_metrics(&dataset.test_fragments)?)?;

    let mut summary = String::from("alpha,epochs,first_train_loss,final_train_loss,final_test_loss,input_snr_db,snr_db,cc,prd,rmse\n");
    for frac in fracs {
        log::info!("training alpha = {}", frac.alpha);
        let cfg = TrainConfig {
            arch: arch.clone(),
            frac,
            compression,
            layers: layers.clone(),
        };
        let init_params = init.init(&arch, frac.seed)?;
        let outcome = train_from(&cfg, init_params, &dataset.train, Some(&dataset.test))?;
        let ckpt = Checkpoint {
            arch: arch.clone(),
            frac,
            compression,
            scaler: dataset.scaler.clone(),
            params: outcome.params,
            test_signals: dataset.test_ids.clone(),
            ranks: outcome.ranks,
        };
        ckpt.save(&args.out.join(checkpoint_name(frac.alpha)))?;
        write_text(
            &args.out.join(loss_curve_name(frac.alpha)),
            &loss_curve_csv(&outcome.history),
        )?;
        let m = ckpt
            .denoiser(&basis)
            .evaluate_mean(&dataset.test_fragments)?;
        let first = outcome.history.first().map_or(f64::NAN, |r| r.train_loss);
        let last = outcome.history.last();
        let _ = writeln!(
            summary,
            "{},{},{:.10e},{:.10e},{:.10e},{:.10},{:.10},{:.10},{:.10},{:.10}",
            alpha_tag(frac.alpha),
            frac.epochs,
            first,
            last.map_or(f64::NAN, |r| r.train_loss),
            last.and_then(|r| r.test_loss).unwrap_or(f64::NAN),
            baseline.snr_db,
            m.snr_db,
            m.cc,
            m.prd,
            m.rmse
        );
        log::info!(
            "alpha {}: held-out SNR {:.3} dB (input {:.3} dB), CC {:.4}",
            frac.alpha,
            m.snr_db,
            baseline.snr_db,
            m.cc
        );
    }
    write_text(&args.out.join("train_summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_denoise(args: &DenoiseArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let basis = TchebichefBasis::cached(ckpt.arch.input_len)?;
    let d = ckpt.denoiser(&basis);
    let rate = args.sample_rate.unwrap_or(DEFAULT_SAMPLE_RATE);
    let signals = read_signals(&args.input, rate)?;
    let out = signals
        .iter()
        .map(|s| Signal::new(d.denoise_signal(&s.samples)?, rate))
        .collect::<Result<Vec<_>>>()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_signals(&args.out, &out)?;
    log::info!("denoised {} signals into {}", out.len(), args.out.display());
    Ok(())
}

fn metric_header() -> &'static str {
    "snr_db,cc,prd,rmse"
}

fn metric_cells(m: &MetricSet) -> String {
    format!("{:.10},{:.10},{:.10},{:.10}", m.snr_db, m.cc, m.prd, m.rmse)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let rate = args.sample_rate.unwrap_or(DEFAULT_SAMPLE_RATE);
    let (clean, noisy, _) = load_corpus(&args.input, rate)?;
    let pairs = pair_signals(&clean, &noisy)?;
    let selected: Vec<_> = if args.all_signals {
        pairs
    } else {
        ckpt.test_signals
            .iter()
            .map(|&i| {
                pairs.get(i).cloned().ok_or_else(|| {
                    Error::Config(format!(
                        "checkpoint refers to held-out signal {i} but the corpus has {} signals",
                        pairs.len()
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let fragments = tile_fragments(&selected, ckpt.arch.input_len)?;
    if fragments.is_empty() {
        return Err(Error::Config("no complete fragments to evaluate".into()));
    }
    let basis = TchebichefBasis::cached(ckpt.arch.input_len)?;
    let per = ckpt.denoiser(&basis).evaluate_fragments(&fragments)?;
    let inputs = input_metrics(&fragments)?;

    let mut table = format!("signal_id,offset,input_snr_db,{}\n", metric_header());
    for ((f, m), i) in fragments.iter().zip(&per).zip(&inputs) {
        let _ = writeln!(
            table,
            "{},{},{:.10},{}",
            f.signal_id,
            f.offset,
            i.snr_db,
            metric_cells(m)
        );
    }
    let agg = mean(&per)?;
    let agg_in = mean(&inputs)?;
    let summary = format!(
        "alpha,n_fragments,input_snr_db,input_cc,{}\n{},{},{:.10},{:.10},{}\n",
        metric_header(),
        alpha_tag(ckpt.frac.alpha),
        fragments.len(),
        agg_in.snr_db,
        agg_in.cc,
        metric_cells(&agg)
    );
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let tag = alpha_tag(ckpt.frac.alpha);
        write_text(
            &out.join(format!("evaluation_alpha{tag}_fragments.csv")),
            &table,
        )?;
        write_text(&out.join(format!("evaluation_alpha{tag}.csv")), &summary)?;
    }
    print!("{summary}");
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CompressResolved {
    pub checkpoints: Vec<String>,
    pub alphas: Option<Vec<f64>>,
    pub layers: Vec<String>,
    pub cr_grid: Vec<f64>,
    pub seed: u64,
    pub sample_rate: f64,
}

fn checkpoint_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut out: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        out.sort();
        if out.is_empty() {
            return Err(Error::Config(format!(
                "no .ckpt files in {}",
                path.display()
            )));
        }
        Ok(out)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn cmd_compress(args: &CompressArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let alphas = match (&args.alpha_grid, &file.alpha_grid) {
        (Some(g), _) => Some(parse_grid(g)?),
        (None, Some(g)) => Some(g.clone()),
        (None, None) => None,
    };
    let layers = layers_from(args.compress_layer.as_ref(), file.compress_layer.as_ref())?;
    let cr_grid = match (&args.cr_grid, &file.cr_grid) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(g)) => g.clone(),
        (None, None) => default_cr_grid(),
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let rate = args
        .sample_rate
        .or(file.sample_rate)
        .unwrap_or(DEFAULT_SAMPLE_RATE);

    let mut selected = Vec::new();
    for path in checkpoint_paths(&args.checkpoint)? {
        let ckpt = Checkpoint::load(&path)?;
        let keep = alphas
            .as_ref()
            .is_none_or(|g| g.iter().any(|a| (a - ckpt.frac.alpha).abs() < 1e-9));
        if keep {
            selected.push((path, ckpt));
        }
    }
    if selected.is_empty() {
        return Err(Error::Config("no checkpoint matches the alpha grid".into()));
    }
    let resolved = CompressResolved {
        checkpoints: selected
            .iter()
            .map(|(p, _)| p.display().to_string())
            .collect(),
        alphas,
        layers: layers.iter().map(|l| l.name().to_string()).collect(),
        cr_grid: cr_grid.clone(),
        seed,
        sample_rate: rate,
    };
    ensure_dir(&args.out)?;
    write_resolved(&args.out, &resolved)?;

    let (clean, noisy, _) = load_corpus(&args.input, rate)?;
    let pairs = pair_signals(&clean, &noisy)?;
    let mut report = CompressionReport::default();
    let mut baseline = format!("alpha,{}\n", metric_header());
    for (path, ckpt) in &selected {
        log::info!("compression sweep for {}", path.display());
        let test: Vec<_> = ckpt
            .test_signals
            .iter()
            .filter_map(|&i| pairs.get(i).cloned())
            .collect();
        if test.len() != ckpt.test_signals.len() {
            return Err(Error::Config(format!(
                "{} refers to signals missing from the corpus",
                path.display()
            )));
        }
        let fragments = tile_fragments(&test, ckpt.arch.input_len)?;
        let basis = TchebichefBasis::cached(ckpt.arch.input_len)?;

        // Layers without a stored optimized rank get the optimized-rank pass now.
        let mut params_opt = ckpt.params.clone();
        let mut ranks: Vec<LayerRank> = Vec::new();
        for &layer in &layers {
            match ckpt.rank_of(layer) {
                Some(r) => ranks.push(r),
                None => ranks.push(optimize_layer(&mut params_opt, layer, seed)?),
            }
        }
        let score = |params: &NetworkParams| {
            Denoiser {
                arch: &ckpt.arch,
                params,
                scaler: &ckpt.scaler,
                basis: &basis,
            }
            .evaluate_mean(&fragments)
        };
        let base = score(&params_opt)?;
        let _ = writeln!(
            baseline,
            "{},{}",
            alpha_tag(ckpt.frac.alpha),
            metric_cells(&base)
        );
        let part = sweep(&params_opt, ckpt.frac.alpha, &ranks, &cr_grid, seed, score)?;
        report.extend(part);
    }
    write_text(
        &args.out.join("compression_metrics.csv"),
        &report.metric_table(),
    )?;
    write_text(
        &args.out.join("compression_ranks.csv"),
        &report.rank_table(),
    )?;
    write_text(&args.out.join("compression_baseline.csv"), &baseline)?;
    print!("{}", report.metric_table());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(
            parse_grid("1.0:1.5:0.1").unwrap(),
            vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
        );
        let cr = parse_grid("0.05:0.95:0.05").unwrap();
        assert_eq!(cr.len(), 19);
        assert_eq!(
            cr,
            default_cr_grid()
                .iter()
                .map(|v| (v * 1e9).round() / 1e9)
                .collect::<Vec<_>>()
        );
        assert_eq!(parse_grid("0, 0.5,0.95").unwrap(), vec![0.0, 0.5, 0.95]);
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn layers() {
        let l = parse_layers(&["fc,conv2".into()]).unwrap();
        assert_eq!(l, vec![CompressionLayer::Fc, CompressionLayer::Conv2]);
        assert!(parse_layers(&["conv4".into()]).is_err());
        assert_eq!(layers_from(None, None).unwrap().len(), 3);
    }

    #[test]
    fn file_config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "eta = 0.001\nalpha_grid = [1.0, 1.2]\n").unwrap();
        let c = FileConfig::load(Some(&p)).unwrap();
        assert_eq!(c.eta, Some(0.001));
        assert_eq!(c.alpha_grid, Some(vec![1.0, 1.2]));
        fs::write(&p, "learning_rate = 1\n").unwrap();
        assert!(matches!(FileConfig::load(Some(&p)), Err(Error::Config(_))));
    }

    #[test]
    fn names() {
        assert_eq!(checkpoint_name(1.2), "model_alpha1.20.ckpt");
        assert_eq!(loss_curve_name(1.0), "loss_alpha1.00.csv");
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
