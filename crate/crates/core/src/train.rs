//! Minibatch training with fractional updates and optional optimized-rank
//! compression.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compression::{layer_matrix, optimize_after_training, CompressionLayer, LayerRank};
use crate::datapipe::Features;
use crate::error::{ensure, Error, Result};
use crate::fractional::FracConfig;
use crate::network::{batch_gradients, train_step, ArchSpec, InitScheme, NetworkParams};

/// When the optimized-rank pass runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMode {
    /// After every epoch's updates.
    PerEpoch,
    /// Once, after the last epoch.
    PostTraining,
    None,
}

impl CompressionMode {
    pub fn name(self) -> &'static str {
        match self {
            CompressionMode::PerEpoch => "per-epoch",
            CompressionMode::PostTraining => "post-training",
            CompressionMode::None => "none",
        }
    }
}

impl FromStr for CompressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-epoch" => Ok(CompressionMode::PerEpoch),
            "post-training" => Ok(CompressionMode::PostTraining),
            "none" => Ok(CompressionMode::None),
            other => Err(Error::Config(format!(
                "unknown compression mode '{other}', expected per-epoch, post-training or none"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub frac: FracConfig,
    pub compression: CompressionMode,
    pub layers: Vec<CompressionLayer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch objective (data term plus L2) seen during the epoch.
    pub train_loss: f64,
    /// Objective on the held-out features after the epoch, when supplied.
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub ranks: Option<Vec<LayerRank>>,
    pub history: Vec<EpochRecord>,
}

/// Full objective over a feature set, evaluated in fixed-size chunks.
pub fn objective(
    arch: &ArchSpec,
    params: &NetworkParams,
    features: &Features,
    lambda: f64,
) -> Result<f64> {
    ensure!(
        !features.is_empty(),
        "cannot evaluate the objective on an empty set"
    );
    const CHUNK: usize = 256;
    let mut weighted = 0.0;
    for start in (0..features.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(features.len());
        let inputs: Vec<&[f64]> = features.inputs[start..end]
            .iter()
            .map(Vec::as_slice)
            .collect();
        let targets: Vec<&[f64]> = features.targets[start..end]
            .iter()
            .map(Vec::as_slice)
            .collect();
        let b = batch_gradients(params, arch, &inputs, &targets)?;
        weighted += b.data_loss * (end - start) as f64;
    }
    Ok(weighted / features.len() as f64 + 0.5 * lambda * params.l2_sum())
}

/// Layers from `requested` that exist in `arch`.
pub fn available_layers(arch: &ArchSpec, requested: &[CompressionLayer]) -> Vec<CompressionLayer> {
    let probe = NetworkParams::zeros(arch);
    requested
        .iter()
        .copied()
        .filter(|&l| layer_matrix(&probe, l).is_ok())
        .collect()
}

/// Trains from the default initialisation seeded with `cfg.frac.seed`.
pub fn train(
    cfg: &TrainConfig,
    train_set: &Features,
    test_set: Option<&Features>,
) -> Result<TrainOutcome> {
    let params = InitScheme::default().init(&cfg.arch, cfg.frac.seed)?;
    train_from(cfg, params, train_set, test_set)
}

/// Trains starting from `params`.
pub fn train_from(
    cfg: &TrainConfig,
    mut params: NetworkParams,
    train_set: &Features,
    test_set: Option<&Features>,
) -> Result<TrainOutcome> {
    cfg.frac.validate()?;
    cfg.arch.validate()?;
    params.check_shapes(&cfg.arch)?;
    ensure!(!train_set.is_empty(), "training set is empty");
    ensure!(
        train_set.inputs.len() == train_set.targets.len(),
        "training inputs and targets differ in count"
    );
    let layers = available_layers(&cfg.arch, &cfg.layers);
    if layers.len() < cfg.layers.len() && cfg.compression != CompressionMode::None {
        log::warn!("architecture lacks some requested compression layers; compressing {layers:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.frac.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.frac.epochs);
    let mut ranks = None;

    for epoch in 1..=cfg.frac.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.frac.batch_size) {
            let inputs: Vec<&[f64]> = batch
                .iter()
                .map(|&i| train_set.inputs[i].as_slice())
                .collect();
            let targets: Vec<&[f64]> = batch
                .iter()
                .map(|&i| train_set.targets[i].as_slice())
                .collect();
            let loss = train_step(&mut params, &cfg.arch, &inputs, &targets, &cfg.frac)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("minibatch objective is {loss}; try a smaller eta"),
                });
            }
            weighted += loss * batch.len() as f64;
        }
        if !params.all_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "parameters became non-finite".into(),
            });
        }
        if cfg.compression == CompressionMode::PerEpoch && !layers.is_empty() {
            ranks = Some(optimize_after_training(
                &mut params,
                &layers,
                epoch_seed(cfg.frac.seed, epoch),
            )?);
        }
        let train_loss = weighted / train_set.len() as f64;
        let test_loss = match test_set {
            Some(t) => Some(objective(&cfg.arch, &params, t, cfg.frac.lambda)?),
            None => None,
        };
        log::info!(
            "epoch {epoch}/{}: train {train_loss:.6}{}",
            cfg.frac.epochs,
            test_loss
                .map(|t| format!(", test {t:.6}"))
                .unwrap_or_default()
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
        });
    }
    if cfg.compression == CompressionMode::PostTraining && !layers.is_empty() {
        ranks = Some(optimize_after_training(
            &mut params,
            &layers,
            epoch_seed(cfg.frac.seed, 0),
        )?);
    }
    Ok(TrainOutcome {
        params,
        ranks,
        history,
    })
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add(0x5851_f42d_4c95_7f2d_u64.wrapping_mul(epoch as u64 + 1))
}

/// Trailing moving average; entry `i` averages `values[i+1-window..=i]`
/// and is only produced once a full window is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Columns `epoch,train_loss,test_loss`; the last is empty without a test set.
pub fn loss_curve_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,test_loss\n");
    for r in history {
        let test = r.test_loss.map(|t| format!("{t:.10e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.10e},{}", r.epoch, r.train_loss, test);
    }
    out
}
