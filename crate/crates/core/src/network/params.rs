use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchSpec;
use crate::error::{ensure, Error, Result};
use crate::linalg::Matrix;

/// Convolution kernel `N_F x N_C x F`, stored as its `N_F x (N_C * F)`
/// reshape (channel-major, then tap).
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    channels: usize,
    taps: usize,
    weights: Matrix,
}

impl Kernel {
    pub fn zeros(filters: usize, channels: usize, taps: usize) -> Self {
        Kernel {
            channels,
            taps,
            weights: Matrix::zeros(filters, channels * taps),
        }
    }

    pub fn from_matrix(weights: Matrix, channels: usize, taps: usize) -> Result<Self> {
        ensure!(
            weights.cols() == channels * taps,
            "kernel matrix has {} columns, expected {} channels x {} taps",
            weights.cols(),
            channels,
            taps
        );
        Ok(Kernel {
            channels,
            taps,
            weights,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.rows()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// `K[m, n, p]`.
    pub fn get(&self, m: usize, n: usize, p: usize) -> f64 {
        self.weights.get(m, n * self.taps + p)
    }

    pub fn set(&mut self, m: usize, n: usize, p: usize, v: f64) {
        self.weights.set(m, n * self.taps + p, v);
    }

    /// The 2D `N_F x (N_C * F)` view used by convolution and compression.
    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernel: Kernel,
    pub bias: Vec<f64>,
}

/// All trainable tensors: per-layer kernels and biases, then the FC weight
/// (`fc_out x flatten_dim`) and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub conv: Vec<ConvParams>,
    pub fc_weight: Matrix,
    pub fc_bias: Vec<f64>,
}

/// Identifies one trainable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TensorId {
    Kernel(usize),
    ConvBias(usize),
    FcWeight,
    FcBias,
}

impl TensorId {
    /// Only kernels and the FC weight carry the L2 penalty.
    pub fn regularized(self) -> bool {
        matches!(self, TensorId::Kernel(_) | TensorId::FcWeight)
    }

    pub fn name(self) -> String {
        match self {
            TensorId::Kernel(i) => format!("conv{}.kernel", i + 1),
            TensorId::ConvBias(i) => format!("conv{}.bias", i + 1),
            TensorId::FcWeight => "fc.weight".to_string(),
            TensorId::FcBias => "fc.bias".to_string(),
        }
    }
}

/// Half-width of the uniform FC weight init under [`InitScheme::He`].
pub const FC_INIT_LIMIT: f64 = 1e-3;

/// Weight initialisation used by training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitScheme {
    Glorot,
    #[default]
    He,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Glorot => "glorot",
            InitScheme::He => "he",
        }
    }

    pub fn init(self, arch: &ArchSpec, seed: u64) -> Result<NetworkParams> {
        match self {
            InitScheme::Glorot => NetworkParams::init_glorot(arch, seed),
            InitScheme::He => NetworkParams::init_he(arch, seed),
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glorot" => Ok(InitScheme::Glorot),
            "he" => Ok(InitScheme::He),
            other => Err(Error::Config(format!(
                "unknown init scheme '{other}' (glorot or he)"
            ))),
        }
    }
}

impl NetworkParams {
    pub fn zeros(arch: &ArchSpec) -> Self {
        let conv = arch
            .conv_layers
            .iter()
            .map(|l| ConvParams {
                kernel: Kernel::zeros(l.filters, l.channels, l.kernel_width),
                bias: vec![0.0; l.filters],
            })
            .collect();
        NetworkParams {
            conv,
            fc_weight: Matrix::zeros(arch.fc_out, arch.flatten_dim()),
            fc_bias: vec![0.0; arch.fc_out],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// For a kernel `fan_in = N_C * F` and `fan_out = N_F * F`.
    pub fn init_glorot(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::zeros(arch);
        for (layer, p) in arch.conv_layers.iter().zip(params.conv.iter_mut()) {
            let fan_in = layer.channels * layer.kernel_width;
            let fan_out = layer.filters * layer.kernel_width;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            fill_uniform(p.kernel.matrix_mut().as_mut_slice(), limit, &mut rng);
        }
        let limit = (6.0 / (arch.flatten_dim() + arch.fc_out) as f64).sqrt();
        fill_uniform(params.fc_weight.as_mut_slice(), limit, &mut rng);
        Ok(params)
    }

    /// He-uniform kernels in `±sqrt(6 / fan_in)`, FC weights uniform in
    /// `±FC_INIT_LIMIT`, zero biases.
    ///
    /// A full-scale random FC layer makes the untrained output large, and the
    /// first updates then switch off the last ReLU layer to shrink it.
    pub fn init_he(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::zeros(arch);
        for (layer, p) in arch.conv_layers.iter().zip(params.conv.iter_mut()) {
            let limit = (6.0 / (layer.channels * layer.kernel_width) as f64).sqrt();
            fill_uniform(p.kernel.matrix_mut().as_mut_slice(), limit, &mut rng);
        }
        fill_uniform(params.fc_weight.as_mut_slice(), FC_INIT_LIMIT, &mut rng);
        Ok(params)
    }

    /// Checks every tensor shape against `arch`.
    pub fn check_shapes(&self, arch: &ArchSpec) -> Result<()> {
        ensure!(
            self.conv.len() == arch.conv_layers.len(),
            "parameter set has {} conv layers, architecture has {}",
            self.conv.len(),
            arch.conv_layers.len()
        );
        for (i, (p, l)) in self.conv.iter().zip(&arch.conv_layers).enumerate() {
            ensure!(
                p.kernel.filters() == l.filters
                    && p.kernel.channels() == l.channels
                    && p.kernel.taps() == l.kernel_width,
                "conv{} kernel is {}x{}x{}, expected {}x{}x{}",
                i + 1,
                p.kernel.filters(),
                p.kernel.channels(),
                p.kernel.taps(),
                l.filters,
                l.channels,
                l.kernel_width
            );
            ensure!(
                p.bias.len() == l.filters,
                "conv{} bias length mismatch",
                i + 1
            );
        }
        ensure!(
            self.fc_weight.shape() == (arch.fc_out, arch.flatten_dim()),
            "fc weight is {:?}, expected {:?}",
            self.fc_weight.shape(),
            (arch.fc_out, arch.flatten_dim())
        );
        ensure!(self.fc_bias.len() == arch.fc_out, "fc bias length mismatch");
        Ok(())
    }

    /// Tensor ids in declaration order.
    pub fn tensor_ids(&self) -> Vec<TensorId> {
        let mut ids = Vec::with_capacity(2 * self.conv.len() + 2);
        for i in 0..self.conv.len() {
            ids.push(TensorId::Kernel(i));
            ids.push(TensorId::ConvBias(i));
        }
        ids.push(TensorId::FcWeight);
        ids.push(TensorId::FcBias);
        ids
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        match id {
            TensorId::Kernel(i) => self.conv[i].kernel.matrix().as_slice(),
            TensorId::ConvBias(i) => &self.conv[i].bias,
            TensorId::FcWeight => self.fc_weight.as_slice(),
            TensorId::FcBias => &self.fc_bias,
        }
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        match id {
            TensorId::Kernel(i) => self.conv[i].kernel.matrix_mut().as_mut_slice(),
            TensorId::ConvBias(i) => &mut self.conv[i].bias,
            TensorId::FcWeight => self.fc_weight.as_mut_slice(),
            TensorId::FcBias => &mut self.fc_bias,
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensor_ids()
            .iter()
            .map(|&id| self.tensor(id).len())
            .sum()
    }

    /// `Σ_j ‖K_j‖² + ‖W‖²`.
    pub fn l2_sum(&self) -> f64 {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        self.conv
            .iter()
            .map(|c| sq(c.kernel.matrix().as_slice()))
            .sum::<f64>()
            + sq(self.fc_weight.as_slice())
    }

    pub fn all_finite(&self) -> bool {
        self.tensor_ids()
            .iter()
            .all(|&id| self.tensor(id).iter().all(|v| v.is_finite()))
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        for id in self.tensor_ids() {
            for (a, b) in self.tensor_mut(id).iter_mut().zip(other.tensor(id)) {
                *a += scale * b;
            }
        }
    }

    /// Largest absolute difference over all tensors.
    pub fn max_abs_diff(&self, other: &NetworkParams) -> f64 {
        self.tensor_ids()
            .iter()
            .flat_map(|&id| {
                self.tensor(id)
                    .iter()
                    .zip(other.tensor(id))
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn fill_uniform(values: &mut [f64], limit: f64, rng: &mut ChaCha8Rng) {
    for v in values {
        *v = rng.random_range(-limit..limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_limits_and_determinism() {
        let arch = ArchSpec::standard(250);
        let a = NetworkParams::init_glorot(&arch, 7).unwrap();
        let b = NetworkParams::init_glorot(&arch, 7).unwrap();
        assert_eq!(a, b);
        a.check_shapes(&arch).unwrap();
        let limit = (6.0f64 / (3968.0 + 250.0)).sqrt();
        assert!(a.fc_weight.as_slice().iter().all(|v| v.abs() <= limit));
        let k2 = (6.0f64 / (48.0 + 192.0)).sqrt();
        assert!(a.conv[1]
            .kernel
            .matrix()
            .as_slice()
            .iter()
            .all(|v| v.abs() <= k2));
        assert!(a.conv.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
        assert_ne!(a, NetworkParams::init_glorot(&arch, 8).unwrap());
    }

    #[test]
    fn he_limits_and_scheme_names() {
        let arch = ArchSpec::standard(250);
        let a = InitScheme::He.init(&arch, 3).unwrap();
        assert_eq!(a, NetworkParams::init_he(&arch, 3).unwrap());
        let w = a.fc_weight.as_slice();
        assert!(w.iter().all(|v| v.abs() <= FC_INIT_LIMIT));
        assert!(w.iter().any(|v| v.abs() > 0.5 * FC_INIT_LIMIT));
        let k1 = (6.0f64 / 3.0).sqrt();
        let m = a.conv[0].kernel.matrix().as_slice();
        assert!(m.iter().all(|v| v.abs() <= k1) && m.iter().any(|v| v.abs() > 0.5 * k1));
        for s in [InitScheme::He, InitScheme::Glorot] {
            assert_eq!(s.name().parse::<InitScheme>().unwrap(), s);
        }
        assert!("xavier".parse::<InitScheme>().is_err());
        assert_eq!(InitScheme::default(), InitScheme::He);
    }

    #[test]
    fn kernel_indexing_matches_reshape() {
        let mut k = Kernel::zeros(4, 3, 2);
        k.set(2, 1, 1, 5.0);
        assert_eq!(k.matrix().get(2, 3), 5.0);
        assert_eq!(k.get(2, 1, 1), 5.0);
    }

    #[test]
    fn parameter_count_of_standard_network() {
        let arch = ArchSpec::standard(250);
        let p = NetworkParams::zeros(&arch);
        let conv = (16 * 3 + 16) + (64 * 48 + 64) + (64 * 192 + 64) + (16 * 192 + 16);
        assert_eq!(p.num_params(), conv + 250 * 3968 + 250);
    }

    #[test]
    fn only_kernels_and_fc_weight_are_regularized() {
        let p = NetworkParams::zeros(&ArchSpec::tiny());
        let reg: Vec<_> = p
            .tensor_ids()
            .into_iter()
            .filter(|id| id.regularized())
            .collect();
        assert_eq!(
            reg,
            vec![TensorId::Kernel(0), TensorId::Kernel(1), TensorId::FcWeight]
        );
    }
}
