//! Glue between spatial signals and the network: dataset assembly, fragment
//! and whole-signal denoising, and metric evaluation.

use crate::datapipe::{
    fragment_augment, mix_noise, mix_seed, prepare_features, split_by_signal, tile_fragments,
    Features, FragmentPair, Scaler, ScalerMode, Signal, SignalPair,
};
use crate::error::{ensure, Result};
use crate::metrics::{evaluate, mean, MetricSet};
use crate::network::{predict, ArchSpec, NetworkParams};
use crate::tchebichef::TchebichefBasis;

/// Everything needed to run the network on spatial fragments.
#[derive(Clone, Copy)]
pub struct Denoiser<'a> {
    pub arch: &'a ArchSpec,
    pub params: &'a NetworkParams,
    pub scaler: &'a Scaler,
    pub basis: &'a TchebichefBasis,
}

impl Denoiser<'_> {
    pub fn fragment_len(&self) -> usize {
        self.arch.input_len
    }

    /// Moments → standardise → network → unstandardise → inverse moments.
    pub fn denoise_fragment(&self, noisy: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            noisy.len() == self.fragment_len(),
            "fragment has {} samples, model expects {}",
            noisy.len(),
            self.fragment_len()
        );
        let z = self.scaler.transform(&self.basis.forward(noisy)?.coeffs)?;
        let out = predict(self.params, self.arch, &z)?;
        self.basis.inverse_coeffs(&self.scaler.inverse(&out)?)
    }

    /// Non-overlapping tiles; the last one is zero-padded and the output is
    /// truncated back to the input length.
    pub fn denoise_signal(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let len = self.fragment_len();
        let mut out = Vec::with_capacity(samples.len() + len);
        for chunk in samples.chunks(len) {
            if chunk.len() == len {
                out.extend(self.denoise_fragment(chunk)?);
            } else {
                let mut padded = chunk.to_vec();
                padded.resize(len, 0.0);
                out.extend(self.denoise_fragment(&padded)?);
            }
        }
        out.truncate(samples.len());
        Ok(out)
    }

    /// Per-fragment metrics of the denoised output against the clean member.
    pub fn evaluate_fragments(&self, fragments: &[FragmentPair]) -> Result<Vec<MetricSet>> {
        fragments
            .iter()
            .map(|f| evaluate(&f.clean, &self.denoise_fragment(&f.noisy)?))
            .collect()
    }

    pub fn evaluate_mean(&self, fragments: &[FragmentPair]) -> Result<MetricSet> {
        mean(&self.evaluate_fragments(fragments)?)
    }
}

/// Metrics of the noisy inputs themselves, the baseline a denoiser must beat.
pub fn input_metrics(fragments: &[FragmentPair]) -> Result<Vec<MetricSet>> {
    fragments
        .iter()
        .map(|f| evaluate(&f.clean, &f.noisy))
        .collect()
}

/// Clean signals paired with noise mixed at `snr_db`; noise `i` goes with
/// clean signal `i`.
pub fn mix_corpus(
    clean: &[Signal],
    noise: &[Signal],
    snr_db: f64,
    seed: u64,
) -> Result<Vec<Signal>> {
    ensure!(!noise.is_empty(), "no noise signals supplied");
    clean
        .iter()
        .enumerate()
        .map(|(i, c)| mix_noise(c, &noise[i % noise.len()], snr_db, mix_seed(seed, i)))
        .collect()
}

pub fn pair_signals(clean: &[Signal], noisy: &[Signal]) -> Result<Vec<SignalPair>> {
    ensure!(
        clean.len() == noisy.len(),
        "{} clean signals but {} noisy ones",
        clean.len(),
        noisy.len()
    );
    Ok(clean
        .iter()
        .zip(noisy)
        .enumerate()
        .map(|(id, (c, n))| SignalPair {
            id,
            clean: c.clone(),
            noisy: n.clone(),
        })
        .collect())
}

/// Train/test material derived from a paired corpus.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub train: Features,
    pub test: Features,
    /// Tiled spatial fragments of the held-out signals.
    pub test_fragments: Vec<FragmentPair>,
    pub scaler: Scaler,
}

#[derive(Clone, Copy, Debug)]
pub struct DatasetConfig {
    pub fragment_len: usize,
    pub train_fragments: usize,
    pub seed: u64,
}

/// 80/20 split by signal, random-offset training fragments, tiled test
/// fragments, moments and a scaler fit on the training inputs only.
pub fn build_dataset(
    pairs: &[SignalPair],
    basis: &TchebichefBasis,
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    ensure!(pairs.len() >= 2, "need at least two signals to split");
    ensure!(
        basis.length() == cfg.fragment_len,
        "basis length {} differs from fragment length {}",
        basis.length(),
        cfg.fragment_len
    );
    let (train_ids, test_ids) = split_by_signal(pairs.len(), cfg.seed);
    let select =
        |ids: &[usize]| -> Vec<SignalPair> { ids.iter().map(|&i| pairs[i].clone()).collect() };
    let train_pairs = select(&train_ids);
    let test_pairs = select(&test_ids);
    let frags = fragment_augment(
        &train_pairs,
        cfg.fragment_len,
        cfg.train_fragments,
        cfg.seed,
    )?;
    let (train, scaler) = prepare_features(&frags.fragments, basis, ScalerMode::Fit)?;
    let test_fragments = tile_fragments(&test_pairs, cfg.fragment_len)?;
    ensure!(
        !test_fragments.is_empty(),
        "held-out signals are shorter than one fragment"
    );
    let (test, _) = prepare_features(&test_fragments, basis, ScalerMode::Apply(&scaler))?;
    Ok(Dataset {
        train_ids,
        test_ids,
        train,
        test,
        test_fragments,
        scaler,
    })
}
