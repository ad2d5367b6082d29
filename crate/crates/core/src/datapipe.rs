//! Signals, synthetic corpora, noise mixing, fragmenting and the moment-space
//! standardiser.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tchebichef::TchebichefBasis;

pub const DEFAULT_SAMPLE_RATE: f64 = 200.0;
pub const DEFAULT_FRAGMENT_LEN: usize = 250;
pub const SCALER_STD_FLOOR: f64 = 1e-12;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    /// Hz; informational except when resampling noise.
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        ensure!(
            samples.iter().all(|v| v.is_finite()),
            "signal samples must be finite"
        );
        ensure!(sample_rate > 0.0, "sample rate must be positive");
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_signals: usize,
    pub length: usize,
    pub seed: u64,
    pub sample_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_signals: 200,
            length: 2000,
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Paired clean signals and noise recordings.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub clean: Vec<Signal>,
    pub noise: Vec<Signal>,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const CLEAN_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const MIX_STREAM: u64 = 2;

/// 3 to 8 sinusoids with frequencies in 0.5..40 Hz, amplitudes falling as 1/f
/// and random phases.
pub fn synth_clean(cfg: &SynthConfig, index: usize) -> Signal {
    let mut rng = substream(cfg.seed, 3 * index as u64 + CLEAN_STREAM);
    let count = rng.random_range(3..=8);
    let comps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let f = rng.random_range(0.5..40.0);
            let amp = rng.random_range(0.5..1.5) / f;
            let phase = rng.random_range(0.0..2.0 * PI);
            (f, amp, phase)
        })
        .collect();
    let samples = (0..cfg.length)
        .map(|n| {
            let t = n as f64 / cfg.sample_rate;
            comps
                .iter()
                .map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum()
        })
        .collect();
    Signal {
        samples,
        sample_rate: cfg.sample_rate,
    }
}

const NOISE_TAPS: usize = 101;
const NOISE_BAND_HZ: (f64, f64) = (20.0, 90.0);

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc band-pass.
fn bandpass_taps(low: f64, high: f64, fs: f64, taps: usize) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let (a, b) = (2.0 * low / fs, 2.0 * high / fs);
    (0..taps)
        .map(|i| {
            let k = i as f64 - mid;
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            w * (b * sinc(b * k) - a * sinc(a * k))
        })
        .collect()
}

/// Muscle-artifact surrogate: band-limited white noise (20..90 Hz) under an
/// envelope of random Hann-shaped bursts over a low floor.
pub fn synth_noise(cfg: &SynthConfig, index: usize) -> Signal {
    let mut rng = substream(cfg.seed, 3 * index as u64 + NOISE_STREAM);
    let n = cfg.length;
    let high = NOISE_BAND_HZ.1.min(0.49 * cfg.sample_rate);
    let taps = bandpass_taps(NOISE_BAND_HZ.0, high, cfg.sample_rate, NOISE_TAPS);
    let white: Vec<f64> = (0..n + NOISE_TAPS)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let filtered: Vec<f64> = (0..n)
        .map(|i| taps.iter().zip(&white[i..]).map(|(h, w)| h * w).sum())
        .collect();

    let mut envelope = vec![0.2; n];
    let bursts = rng.random_range(3..=8);
    for _ in 0..bursts {
        let centre = rng.random_range(0.0..n as f64);
        let half_width = rng.random_range(0.1..0.75) * cfg.sample_rate;
        let amp = rng.random_range(0.5..1.5);
        let lo = (centre - half_width).max(0.0) as usize;
        let hi = ((centre + half_width).ceil() as usize).min(n);
        for (i, e) in envelope.iter_mut().enumerate().take(hi).skip(lo) {
            let x = (i as f64 - centre) / half_width;
            if x.abs() < 1.0 {
                *e += amp * 0.5 * (1.0 + (PI * x).cos());
            }
        }
    }
    Signal {
        samples: filtered.iter().zip(&envelope).map(|(f, e)| f * e).collect(),
        sample_rate: cfg.sample_rate,
    }
}

/// Deterministic corpus; signal `i` depends only on `(seed, i)`.
pub fn synth_corpus(cfg: &SynthConfig) -> Corpus {
    Corpus {
        clean: (0..cfg.n_signals).map(|i| synth_clean(cfg, i)).collect(),
        noise: (0..cfg.n_signals).map(|i| synth_noise(cfg, i)).collect(),
    }
}

/// Linear-interpolation resampling to `target_rate`.
pub fn resample_linear(signal: &Signal, target_rate: f64) -> Result<Signal> {
    ensure!(target_rate > 0.0, "target rate must be positive");
    ensure!(!signal.is_empty(), "cannot resample an empty signal");
    if signal.sample_rate == target_rate {
        return Ok(signal.clone());
    }
    let duration = (signal.len() - 1) as f64 / signal.sample_rate;
    let out_len = (duration * target_rate).floor() as usize + 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * signal.sample_rate / target_rate;
            let j = pos.floor() as usize;
            if j + 1 >= signal.len() {
                signal.samples[signal.len() - 1]
            } else {
                let t = pos - j as f64;
                signal.samples[j] * (1.0 - t) + signal.samples[j + 1] * t
            }
        })
        .collect();
    Ok(Signal {
        samples,
        sample_rate: target_rate,
    })
}

/// `clean + k * noise` with `k` chosen so the mixture SNR is `target_snr_db`.
///
/// The noise is resampled to the clean rate, tiled if it is short, and
/// cropped from a random offset.
pub fn mix_noise(clean: &Signal, noise: &Signal, target_snr_db: f64, seed: u64) -> Result<Signal> {
    ensure!(!target_snr_db.is_nan(), "target SNR must not be NaN");
    ensure!(clean.energy() > 0.0, "clean signal has zero energy");
    ensure!(noise.energy() > 0.0, "noise signal has zero energy");
    let noise = resample_linear(noise, clean.sample_rate)?;
    let n = clean.len();
    let source: Vec<f64> = if noise.len() >= n {
        noise.samples
    } else {
        noise.samples.iter().copied().cycle().take(n).collect()
    };
    let mut rng = substream(seed, MIX_STREAM);
    let offset = rng.random_range(0..=source.len() - n);
    let segment = &source[offset..offset + n];
    let seg_energy: f64 = segment.iter().map(|v| v * v).sum();
    ensure!(seg_energy > 0.0, "selected noise segment has zero energy");
    let k = (clean.energy() / (seg_energy * 10f64.powf(target_snr_db / 10.0))).sqrt();
    Signal::new(
        clean
            .samples
            .iter()
            .zip(segment)
            .map(|(x, z)| x + k * z)
            .collect(),
        clean.sample_rate,
    )
}

/// Seed of the mixing substream for signal `index`.
pub fn mix_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)
}

/// Spatial-domain fragment pair cut at the same offset of a clean/noisy pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentPair {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
    pub signal_id: usize,
    pub offset: usize,
}

/// A clean/noisy signal pair with its corpus id.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPair {
    pub id: usize,
    pub clean: Signal,
    pub noisy: Signal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FragmentSet {
    pub fragments: Vec<FragmentPair>,
    /// Signals shorter than the fragment length.
    pub skipped: usize,
}

fn cut(pair: &SignalPair, offset: usize, len: usize) -> FragmentPair {
    FragmentPair {
        noisy: pair.noisy.samples[offset..offset + len].to_vec(),
        clean: pair.clean.samples[offset..offset + len].to_vec(),
        signal_id: pair.id,
        offset,
    }
}

/// Exactly `target_count` fragments drawn uniformly over every valid
/// (signal, offset) position.
pub fn fragment_augment(
    pairs: &[SignalPair],
    fragment_len: usize,
    target_count: usize,
    seed: u64,
) -> Result<FragmentSet> {
    ensure!(fragment_len >= 1, "fragment length must be positive");
    for p in pairs {
        ensure!(
            p.clean.len() == p.noisy.len(),
            "signal {} has clean length {} but noisy length {}",
            p.id,
            p.clean.len(),
            p.noisy.len()
        );
    }
    let usable: Vec<&SignalPair> = pairs
        .iter()
        .filter(|p| p.clean.len() >= fragment_len)
        .collect();
    let skipped = pairs.len() - usable.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} signals shorter than {fragment_len} samples");
    }
    ensure!(
        target_count == 0 || !usable.is_empty(),
        "no signal is at least {} samples long",
        fragment_len
    );
    let mut cumulative = Vec::with_capacity(usable.len());
    let mut total = 0usize;
    for p in &usable {
        total += p.clean.len() - fragment_len + 1;
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fragments = (0..target_count)
        .map(|_| {
            let u = rng.random_range(0..total);
            let s = cumulative.partition_point(|&c| c <= u);
            let start = if s == 0 { 0 } else { cumulative[s - 1] };
            cut(usable[s], u - start, fragment_len)
        })
        .collect();
    Ok(FragmentSet { fragments, skipped })
}

/// Non-overlapping fragments at offsets `0, L, 2L, ...`; a tail shorter than
/// `L` is dropped.
pub fn tile_fragments(pairs: &[SignalPair], fragment_len: usize) -> Result<Vec<FragmentPair>> {
    ensure!(fragment_len >= 1, "fragment length must be positive");
    let mut out = Vec::new();
    for p in pairs {
        ensure!(
            p.clean.len() == p.noisy.len(),
            "signal {} length mismatch",
            p.id
        );
        let mut offset = 0;
        while offset + fragment_len <= p.clean.len() {
            out.push(cut(p, offset, fragment_len));
            offset += fragment_len;
        }
    }
    Ok(out)
}

/// Shuffles signal ids and puts the first `round(0.8 n)` into training.
pub fn split_by_signal(n_signals: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n_signals).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (TRAIN_FRACTION * n_signals as f64).round() as usize;
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Per-feature `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population mean and std per feature; std floored at 1e-12.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), "cannot fit a scaler on an empty set");
        let d = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == d),
            "rows have differing lengths"
        );
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| (s / n).sqrt().max(SCALER_STD_FLOOR))
            .collect();
        Ok(Scaler { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            x.len() == self.dim(),
            "scaler expects {} features, got {}",
            self.dim(),
            x.len()
        );
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            z.len() == self.dim(),
            "scaler expects {} features, got {}",
            self.dim(),
            z.len()
        );
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }
}

pub enum ScalerMode<'a> {
    Fit,
    Apply(&'a Scaler),
}

/// Standardised moment vectors ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Moments of both members of every fragment, standardised with one scaler.
/// In fit mode the scaler is estimated from the noisy moments of `fragments`.
pub fn prepare_features(
    fragments: &[FragmentPair],
    basis: &TchebichefBasis,
    mode: ScalerMode<'_>,
) -> Result<(Features, Scaler)> {
    ensure!(!fragments.is_empty(), "no fragments to transform");
    let mut noisy = Vec::with_capacity(fragments.len());
    let mut clean = Vec::with_capacity(fragments.len());
    for f in fragments {
        noisy.push(basis.forward(&f.noisy)?.coeffs);
        clean.push(basis.forward(&f.clean)?.coeffs);
    }
    let scaler = match mode {
        ScalerMode::Fit => Scaler::fit(&noisy)?,
        ScalerMode::Apply(s) => s.clone(),
    };
    let inputs = noisy
        .iter()
        .map(|m| scaler.transform(m))
        .collect::<Result<_>>()?;
    let targets = clean
        .iter()
        .map(|m| scaler.transform(m))
        .collect::<Result<_>>()?;
    Ok((Features { inputs, targets }, scaler))
}

/// Reads one signal per line; values separated by commas and/or whitespace.
/// Blank lines and lines starting with `#` are ignored.
pub fn read_signals(path: &Path, sample_rate: f64) -> Result<Vec<Signal>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let samples = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| {
                    Error::Format(format!(
                        "{}:{}: bad value '{t}': {e}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let sig = Signal::new(samples, sample_rate)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(sig);
    }
    Ok(out)
}

pub fn signals_to_csv(signals: &[Signal]) -> String {
    let mut out = String::new();
    for s in signals {
        let row: Vec<String> = s.samples.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_signals(path: &Path, signals: &[Signal]) -> Result<()> {
    fs::write(path, signals_to_csv(signals)).map_err(|e| Error::io(path, e))
}
