//! Randomized SVD with QR-stabilised subspace iteration, the 90% energy rank
//! rule and rank-r reconstruction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Result};
use crate::linalg::{matmul, matmul_tn, qr, rank_r_product, svd, Matrix};
use crate::network::Kernel;

/// Share of squared singular-value mass the optimized rank must retain.
pub const VARIANCE_THRESHOLD: f64 = 0.9;

pub const DEFAULT_OVERSAMPLING: usize = 5;
pub const DEFAULT_SUBSPACE_ITERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RsvdConfig {
    pub rank: usize,
    pub oversampling: usize,
    pub subspace_iters: usize,
    pub seed: u64,
}

impl RsvdConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        RsvdConfig {
            rank,
            oversampling: DEFAULT_OVERSAMPLING,
            subspace_iters: DEFAULT_SUBSPACE_ITERS,
            seed,
        }
    }
}

/// `u * diag(s) * vᵀ` truncated to rank `s.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactors {
    /// `rows x r`, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: Matrix,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Rank-`target_rank` product of the leading factors.
    pub fn reconstruct(&self, target_rank: usize) -> Result<Matrix> {
        ensure!(
            target_rank >= 1 && target_rank <= self.rank(),
            "target rank {} outside 1..={}",
            target_rank,
            self.rank()
        );
        Ok(rank_r_product(&self.u, &self.s, &self.v, target_rank))
    }
}

/// The `N_F x (N_C * F)` view of a kernel, channel-major then tap.
pub fn reshape_kernel(kernel: &Kernel) -> Matrix {
    kernel.matrix().clone()
}

/// Inverse of [`reshape_kernel`].
pub fn unreshape_kernel(matrix: Matrix, channels: usize, taps: usize) -> Result<Kernel> {
    Kernel::from_matrix(matrix, channels, taps)
}

/// Randomized SVD: Gaussian sketch, `k` QR-stabilised power iterations,
/// condensation and a small exact SVD.
///
/// Needs `rank + oversampling` below the row count. When that fails but the
/// column count is large enough, the transpose is decomposed and the factors
/// swapped.
pub fn rsvd(a: &Matrix, cfg: &RsvdConfig) -> Result<LowRankFactors> {
    let (m, n) = a.shape();
    let ell = cfg.rank + cfg.oversampling;
    ensure!(cfg.rank >= 1, "rsvd rank must be at least 1");
    ensure!(
        cfg.rank <= m.min(n),
        "rsvd rank {} exceeds min dimension of {}x{}",
        cfg.rank,
        m,
        n
    );
    if ell < m {
        rsvd_oriented(a, cfg)
    } else if ell < n {
        let f = rsvd_oriented(&a.transpose(), cfg)?;
        Ok(LowRankFactors {
            u: f.v,
            s: f.s,
            v: f.u,
        })
    } else {
        Err(crate::error::Error::contract(format!(
            "rsvd needs rank + oversampling ({ell}) below a dimension of the {m}x{n} target"
        )))
    }
}

fn rsvd_oriented(a: &Matrix, cfg: &RsvdConfig) -> Result<LowRankFactors> {
    let (_, n) = a.shape();
    let ell = cfg.rank + cfg.oversampling;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = Matrix::from_fn(n, ell, |_, _| StandardNormal.sample(&mut rng));
    let (mut q, _) = qr(&matmul(a, &omega)?)?;
    for _ in 0..cfg.subspace_iters {
        let (g, _) = qr(&matmul_tn(a, &q)?)?;
        q = qr(&matmul(a, &g)?)?.0;
    }
    let b = matmul_tn(&q, a)?;
    let small = svd(&b)?;
    ensure!(
        small.s.len() >= cfg.rank,
        "condensed matrix has only {} singular values, rank {} requested",
        small.s.len(),
        cfg.rank
    );
    let u = matmul(&q, &small.u)?;
    Ok(LowRankFactors {
        u: u.leading_columns(cfg.rank),
        s: small.s[..cfg.rank].to_vec(),
        v: small.v.leading_columns(cfg.rank),
    })
}

/// Exact thin SVD packaged as factors, truncated to `rank`.
pub fn exact_factors(a: &Matrix, rank: usize) -> Result<LowRankFactors> {
    let full = svd(a)?;
    ensure!(
        rank >= 1 && rank <= full.s.len(),
        "rank {} outside 1..={}",
        rank,
        full.s.len()
    );
    Ok(LowRankFactors {
        u: full.u.leading_columns(rank),
        s: full.s[..rank].to_vec(),
        v: full.v.leading_columns(rank),
    })
}

/// Smallest `r` whose leading singular values hold at least 90% of `Σ s²`.
/// An all-zero spectrum gives 1.
pub fn optimized_rank(s: &[f64]) -> Result<usize> {
    ensure!(!s.is_empty(), "optimized_rank needs a non-empty spectrum");
    ensure!(
        s.iter().all(|v| v.is_finite() && *v >= 0.0),
        "singular values must be finite and nonnegative"
    );
    ensure!(
        s.windows(2).all(|w| w[0] >= w[1]),
        "singular values must be sorted descending"
    );
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut cum = 0.0;
    for (i, v) in s.iter().enumerate() {
        cum += v * v;
        if cum / total >= VARIANCE_THRESHOLD {
            return Ok(i + 1);
        }
    }
    // Rounding can leave cum / total a hair under 1.
    Ok(s.len())
}

/// Count of singular values above `max(rows, cols) * eps * s_max`.
pub fn numerical_rank(s: &[f64], rows: usize, cols: usize) -> usize {
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = rows.max(cols) as f64 * f64::EPSILON * smax;
    s.iter().filter(|&&v| v > tol).count()
}

/// `U diag(s) Vᵀ` with seeded random orthonormal `U`, `V`; `s.len()` must not
/// exceed either dimension. Useful for building matrices with a known
/// spectrum.
pub fn matrix_with_spectrum(rows: usize, cols: usize, s: &[f64], seed: u64) -> Result<Matrix> {
    ensure!(
        s.len() <= rows.min(cols),
        "spectrum of length {} does not fit a {}x{} matrix",
        s.len(),
        rows,
        cols
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = s.len();
    let mut gauss = |r: usize| Matrix::from_fn(r, k, |_, _| StandardNormal.sample(&mut rng));
    let (u, _) = qr(&gauss(rows))?;
    let (v, _) = qr(&gauss(cols))?;
    Ok(rank_r_product(&u, s, &v, k))
}
