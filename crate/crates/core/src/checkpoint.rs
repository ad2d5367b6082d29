//! Versioned little-endian binary container for trained models and feature
//! caches. The byte layout is documented in `docs/checkpoint-format.md`.

use std::fs;
use std::path::Path;

use crate::compression::{CompressionLayer, LayerRank};
use crate::datapipe::{Features, FragmentPair, Scaler};
use crate::error::{Error, Result};
use crate::fractional::FracConfig;
use crate::network::{ArchSpec, ConvLayerSpec, NetworkParams, PostOp};
use crate::pipeline::{Dataset, DatasetConfig, Denoiser};
use crate::tchebichef::TchebichefBasis;
use crate::train::CompressionMode;

pub const MAGIC: &[u8; 8] = b"FRCAECKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    Model = 1,
    FeatureCache = 2,
}

#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(kind: ContainerKind) -> Self {
        let mut e = Encoder::default();
        e.buf.extend_from_slice(MAGIC);
        e.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        e.buf.extend_from_slice(&(kind as u32).to_le_bytes());
        e
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed.
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }

    fn rows(&mut self, rows: &[Vec<f64>]) {
        self.usize(rows.len());
        rows.iter().for_each(|r| self.f64s(r));
    }

    fn scaler(&mut self, s: &Scaler) {
        self.f64s(&s.mean);
        self.f64s(&s.std);
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl<'a> Decoder<'a> {
    fn new(buf: &'a [u8], kind: ContainerKind) -> Result<Self> {
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(fmt_err("not a fracae container (bad magic)"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap_or_default());
        if version != FORMAT_VERSION {
            return Err(fmt_err(format!(
                "container version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let found = u32::from_le_bytes(buf[12..16].try_into().unwrap_or_default());
        if found != kind as u32 {
            return Err(fmt_err(format!(
                "container holds kind {found}, expected {} ({kind:?})",
                kind as u32
            )));
        }
        Ok(Decoder { buf, pos: 16 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(fmt_err(format!("container truncated at byte {}", self.pos))),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap_or_default()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| fmt_err(format!("count {v} does not fit in usize")))
    }

    /// A count that must be backed by at least `count * unit` remaining bytes.
    fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        let need = n.saturating_mul(unit);
        if need > self.buf.len() - self.pos {
            return Err(fmt_err(format!(
                "count {n} at byte {} exceeds the container",
                self.pos
            )));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap_or_default()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn rows(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64s()).collect()
    }

    fn scaler(&mut self) -> Result<Scaler> {
        let mean = self.f64s()?;
        let std = self.f64s()?;
        if mean.len() != std.len() {
            return Err(fmt_err("scaler mean and std differ in length"));
        }
        Ok(Scaler { mean, std })
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(fmt_err(format!(
                "{} trailing bytes after container body",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn mode_code(m: CompressionMode) -> u64 {
    match m {
        CompressionMode::None => 0,
        CompressionMode::PerEpoch => 1,
        CompressionMode::PostTraining => 2,
    }
}

fn mode_from_code(c: u64) -> Result<CompressionMode> {
    match c {
        0 => Ok(CompressionMode::None),
        1 => Ok(CompressionMode::PerEpoch),
        2 => Ok(CompressionMode::PostTraining),
        _ => Err(fmt_err(format!("unknown compression mode code {c}"))),
    }
}

/// A trained model plus what is needed to use and evaluate it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchSpec,
    pub frac: FracConfig,
    pub compression: CompressionMode,
    pub scaler: Scaler,
    pub params: NetworkParams,
    /// Corpus ids of the held-out signals.
    pub test_signals: Vec<usize>,
    /// Optimized ranks from the last compression pass, if any ran.
    pub ranks: Option<Vec<LayerRank>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(ContainerKind::Model);
        e.usize(self.arch.input_len);
        e.usize(self.arch.conv_layers.len());
        for l in &self.arch.conv_layers {
            e.usize(l.filters);
            e.usize(l.channels);
            e.usize(l.kernel_width);
            e.usize(l.padding);
            e.usize(l.stride);
            e.u64(l.post.code());
        }
        e.usize(self.arch.fc_out);

        e.f64(self.frac.alpha);
        e.f64(self.frac.eta);
        e.f64(self.frac.lambda);
        e.f64(self.frac.epsilon_floor);
        e.usize(self.frac.epochs);
        e.usize(self.frac.batch_size);
        e.u64(self.frac.seed);
        e.u64(mode_code(self.compression));

        e.scaler(&self.scaler);
        let ids = self.params.tensor_ids();
        e.usize(ids.len());
        for id in ids {
            e.f64s(self.params.tensor(id));
        }
        e.usizes(&self.test_signals);
        match &self.ranks {
            None => e.u64(0),
            Some(ranks) => {
                e.u64(1);
                e.usize(ranks.len());
                for r in ranks {
                    e.u64(r.layer.code());
                    e.usize(r.original_rank);
                    e.usize(r.optimized_rank);
                }
            }
        }
        e.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(buf, ContainerKind::Model)?;
        let input_len = d.usize()?;
        let n_conv = d.count(48)?;
        let mut conv_layers = Vec::with_capacity(n_conv);
        for _ in 0..n_conv {
            let filters = d.usize()?;
            let channels = d.usize()?;
            let kernel_width = d.usize()?;
            let padding = d.usize()?;
            let stride = d.usize()?;
            let code = d.u64()?;
            let post = PostOp::from_code(code)
                .ok_or_else(|| fmt_err(format!("unknown post-op code {code}")))?;
            conv_layers.push(ConvLayerSpec {
                filters,
                channels,
                kernel_width,
                padding,
                stride,
                post,
            });
        }
        let arch = ArchSpec {
            input_len,
            conv_layers,
            fc_out: d.usize()?,
        };
        arch.validate()
            .map_err(|e| fmt_err(format!("stored architecture is invalid: {e}")))?;

        let frac = FracConfig {
            alpha: d.f64()?,
            eta: d.f64()?,
            lambda: d.f64()?,
            epsilon_floor: d.f64()?,
            epochs: d.usize()?,
            batch_size: d.usize()?,
            seed: d.u64()?,
        };
        let compression = mode_from_code(d.u64()?)?;
        let scaler = d.scaler()?;

        let mut params = NetworkParams::zeros(&arch);
        let ids = params.tensor_ids();
        let stored = d.usize()?;
        if stored != ids.len() {
            return Err(fmt_err(format!(
                "checkpoint has {stored} tensors, architecture needs {}",
                ids.len()
            )));
        }
        for id in ids {
            let values = d.f64s()?;
            let slot = params.tensor_mut(id);
            if values.len() != slot.len() {
                return Err(fmt_err(format!(
                    "{} has {} values, architecture needs {}",
                    id.name(),
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        if scaler.mean.len() != arch.input_len {
            return Err(fmt_err(format!(
                "scaler has {} features, network input is {}",
                scaler.mean.len(),
                arch.input_len
            )));
        }
        let test_signals = d.usizes()?;
        let ranks = match d.u64()? {
            0 => None,
            1 => {
                let n = d.count(24)?;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let code = d.u64()?;
                    let layer = CompressionLayer::from_code(code)
                        .ok_or_else(|| fmt_err(format!("unknown layer code {code}")))?;
                    out.push(LayerRank {
                        layer,
                        original_rank: d.usize()?,
                        optimized_rank: d.usize()?,
                    });
                }
                Some(out)
            }
            f => return Err(fmt_err(format!("bad rank-table flag {f}"))),
        };
        d.finish()?;
        Ok(Checkpoint {
            arch,
            frac,
            compression,
            scaler,
            params,
            test_signals,
            ranks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn denoiser<'a>(&'a self, basis: &'a TchebichefBasis) -> Denoiser<'a> {
        Denoiser {
            arch: &self.arch,
            params: &self.params,
            scaler: &self.scaler,
            basis,
        }
    }

    pub fn rank_of(&self, layer: CompressionLayer) -> Option<LayerRank> {
        self.ranks
            .as_ref()?
            .iter()
            .find(|r| r.layer == layer)
            .copied()
    }
}

/// 64-bit FNV-1a, used to tie a feature cache to its input bytes.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Prepared train/test features tied to the inputs and settings that made
/// them.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    pub input_fingerprint: u64,
    pub config: DatasetConfig,
    pub dataset: Dataset,
}

impl FeatureCache {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(ContainerKind::FeatureCache);
        e.u64(self.input_fingerprint);
        e.usize(self.config.fragment_len);
        e.usize(self.config.train_fragments);
        e.u64(self.config.seed);
        let ds = &self.dataset;
        e.usizes(&ds.train_ids);
        e.usizes(&ds.test_ids);
        e.scaler(&ds.scaler);
        for f in [&ds.train, &ds.test] {
            e.rows(&f.inputs);
            e.rows(&f.targets);
        }
        e.usize(ds.test_fragments.len());
        for f in &ds.test_fragments {
            e.usize(f.signal_id);
            e.usize(f.offset);
            e.f64s(&f.noisy);
            e.f64s(&f.clean);
        }
        e.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(buf, ContainerKind::FeatureCache)?;
        let input_fingerprint = d.u64()?;
        let config = DatasetConfig {
            fragment_len: d.usize()?,
            train_fragments: d.usize()?,
            seed: d.u64()?,
        };
        let train_ids = d.usizes()?;
        let test_ids = d.usizes()?;
        let scaler = d.scaler()?;
        let mut sets = Vec::with_capacity(2);
        for _ in 0..2 {
            let inputs = d.rows()?;
            let targets = d.rows()?;
            if inputs.len() != targets.len() {
                return Err(fmt_err("feature inputs and targets differ in count"));
            }
            sets.push(Features { inputs, targets });
        }
        let n = d.count(32)?;
        let mut test_fragments = Vec::with_capacity(n);
        for _ in 0..n {
            test_fragments.push(FragmentPair {
                signal_id: d.usize()?,
                offset: d.usize()?,
                noisy: d.f64s()?,
                clean: d.f64s()?,
            });
        }
        d.finish()?;
        let test = sets.pop().unwrap_or_else(|| Features {
            inputs: vec![],
            targets: vec![],
        });
        let train = sets.pop().unwrap_or_else(|| Features {
            inputs: vec![],
            targets: vec![],
        });
        Ok(FeatureCache {
            input_fingerprint,
            config,
            dataset: Dataset {
                train_ids,
                test_ids,
                train,
                test,
                test_fragments,
                scaler,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// True when the cache was built from the same inputs and settings.
    pub fn matches(&self, input_fingerprint: u64, config: &DatasetConfig) -> bool {
        self.input_fingerprint == input_fingerprint
            && self.config.fragment_len == config.fragment_len
            && self.config.train_fragments == config.train_fragments
            && self.config.seed == config.seed
    }
}
