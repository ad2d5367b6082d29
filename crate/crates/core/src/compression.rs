//! Layer-wise low-rank compression of a trained network: the optimized-rank
//! pass and the fixed-rate sweep evaluated on test data.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::Matrix;
use crate::lowrank::{
    exact_factors, numerical_rank, optimized_rank, rsvd, LowRankFactors, RsvdConfig,
};
use crate::metrics::MetricSet;
use crate::network::NetworkParams;

pub const MAX_COMPRESSION_RATE: f64 = 0.95;

/// Layers eligible for compression. The first and last convolutions and all
/// biases are left alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionLayer {
    Conv2,
    Conv3,
    Fc,
}

impl CompressionLayer {
    pub const ALL: [CompressionLayer; 3] = [
        CompressionLayer::Conv2,
        CompressionLayer::Conv3,
        CompressionLayer::Fc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompressionLayer::Conv2 => "conv2",
            CompressionLayer::Conv3 => "conv3",
            CompressionLayer::Fc => "fc",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            CompressionLayer::Conv2 => 2,
            CompressionLayer::Conv3 => 3,
            CompressionLayer::Fc => 5,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.code() == code)
    }

    /// Index into `NetworkParams::conv`, or `None` for the FC layer.
    fn conv_index(self) -> Option<usize> {
        match self {
            CompressionLayer::Conv2 => Some(1),
            CompressionLayer::Conv3 => Some(2),
            CompressionLayer::Fc => None,
        }
    }
}

impl fmt::Display for CompressionLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompressionLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conv2" => Ok(CompressionLayer::Conv2),
            "conv3" => Ok(CompressionLayer::Conv3),
            "fc" => Ok(CompressionLayer::Fc),
            other => Err(Error::Config(format!(
                "unknown layer '{other}', expected conv2, conv3 or fc"
            ))),
        }
    }
}

/// The 2D matrix a layer is compressed as.
pub fn layer_matrix(params: &NetworkParams, layer: CompressionLayer) -> Result<Matrix> {
    match layer.conv_index() {
        Some(i) => {
            ensure!(
                i < params.conv.len(),
                "network has {} conv layers, no {}",
                params.conv.len(),
                layer
            );
            Ok(params.conv[i].kernel.matrix().clone())
        }
        None => Ok(params.fc_weight.clone()),
    }
}

pub fn set_layer_matrix(
    params: &mut NetworkParams,
    layer: CompressionLayer,
    m: Matrix,
) -> Result<()> {
    let target = match layer.conv_index() {
        Some(i) => {
            ensure!(
                i < params.conv.len(),
                "network has {} conv layers, no {}",
                params.conv.len(),
                layer
            );
            params.conv[i].kernel.matrix_mut()
        }
        None => &mut params.fc_weight,
    };
    ensure!(
        target.shape() == m.shape(),
        "{} is {:?}, replacement is {:?}",
        layer,
        target.shape(),
        m.shape()
    );
    *target = m;
    Ok(())
}

/// Rank-`rank` factors by RSVD, or by exact SVD when the matrix is too small
/// for `rank` plus oversampling in either orientation.
pub fn layer_factors(a: &Matrix, rank: usize, seed: u64) -> Result<LowRankFactors> {
    let cfg = RsvdConfig::new(rank, seed);
    let (m, n) = a.shape();
    if rank + cfg.oversampling < m.max(n) {
        rsvd(a, &cfg)
    } else {
        exact_factors(a, rank)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRank {
    pub layer: CompressionLayer,
    pub original_rank: usize,
    pub optimized_rank: usize,
}

fn layer_seed(seed: u64, layer: CompressionLayer) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ layer.code()
}

/// Replaces one layer by its optimized-rank reconstruction.
pub fn optimize_layer(
    params: &mut NetworkParams,
    layer: CompressionLayer,
    seed: u64,
) -> Result<LayerRank> {
    let a = layer_matrix(params, layer)?;
    let (m, n) = a.shape();
    let factors = layer_factors(&a, m.min(n), layer_seed(seed, layer))?;
    let opt = optimized_rank(&factors.s)?;
    set_layer_matrix(params, layer, factors.reconstruct(opt)?)?;
    Ok(LayerRank {
        layer,
        original_rank: numerical_rank(&factors.s, m, n),
        optimized_rank: opt,
    })
}

/// Optimized-rank pass over every listed layer; all other tensors are left
/// untouched.
pub fn optimize_after_training(
    params: &mut NetworkParams,
    layers: &[CompressionLayer],
    seed: u64,
) -> Result<Vec<LayerRank>> {
    layers
        .iter()
        .map(|&l| optimize_layer(params, l, seed))
        .collect()
}

/// `max(1, round_half_up((1 - c_r) * rank))`.
pub fn retained_rank(rank: usize, c_r: f64) -> Result<usize> {
    ensure!(
        (0.0..=MAX_COMPRESSION_RATE + 1e-12).contains(&c_r),
        "compression rate {c_r} outside [0, {MAX_COMPRESSION_RATE}]"
    );
    ensure!(rank >= 1, "rank of the optimized layer must be positive");
    let r = ((1.0 - c_r) * rank as f64 + 0.5).floor() as usize;
    Ok(r.max(1))
}

/// Copy of `params_opt` with `layer` replaced by its rank-`r` approximation,
/// `r` derived from the layer's optimized rank. Returns the params and `r`.
pub fn compress_at_rate(
    params_opt: &NetworkParams,
    layer: CompressionLayer,
    optimized_rank: usize,
    c_r: f64,
    seed: u64,
) -> Result<(NetworkParams, usize)> {
    let r = retained_rank(optimized_rank, c_r)?;
    let a = layer_matrix(params_opt, layer)?;
    ensure!(
        r <= a.rows().min(a.cols()),
        "retained rank {} exceeds {} dimensions {:?}",
        r,
        layer,
        a.shape()
    );
    let factors = layer_factors(&a, r, layer_seed(seed, layer))?;
    let mut out = params_opt.clone();
    set_layer_matrix(&mut out, layer, factors.reconstruct(r)?)?;
    Ok((out, r))
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_cr_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub layer: CompressionLayer,
    pub c_r: f64,
    pub original_rank: usize,
    pub optimized_rank: usize,
    pub achieved_rank: usize,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub rows: Vec<SweepRow>,
}

impl CompressionReport {
    /// Columns `alpha,layer,c_r,snr_db,cc,prd,rmse`.
    pub fn metric_table(&self) -> String {
        let mut out = String::from("alpha,layer,c_r,snr_db,cc,prd,rmse\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:.2},{},{:.2},{:.10},{:.10},{:.10},{:.10}",
                r.alpha, r.layer, r.c_r, m.snr_db, m.cc, m.prd, m.rmse
            );
        }
        out
    }

    /// Columns `alpha,layer,original_rank,optimized_rank,c_r,achieved_rank`.
    pub fn rank_table(&self) -> String {
        let mut out = String::from("alpha,layer,original_rank,optimized_rank,c_r,achieved_rank\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.2},{},{},{},{:.2},{}",
                r.alpha, r.layer, r.original_rank, r.optimized_rank, r.c_r, r.achieved_rank
            );
        }
        out
    }

    pub fn extend(&mut self, other: CompressionReport) {
        self.rows.extend(other.rows);
    }
}

/// Layer-wise sweep: for each layer and rate, compress only that layer of
/// `params_opt` and score the result with `evaluate`.
pub fn sweep<F>(
    params_opt: &NetworkParams,
    alpha: f64,
    ranks: &[LayerRank],
    cr_grid: &[f64],
    seed: u64,
    mut evaluate: F,
) -> Result<CompressionReport>
where
    F: FnMut(&NetworkParams) -> Result<MetricSet>,
{
    let mut rows = Vec::with_capacity(ranks.len() * cr_grid.len());
    for lr in ranks {
        for &c_r in cr_grid {
            let (params, achieved) =
                compress_at_rate(params_opt, lr.layer, lr.optimized_rank, c_r, seed)?;
            rows.push(SweepRow {
                alpha,
                layer: lr.layer,
                c_r,
                original_rank: lr.original_rank,
                optimized_rank: lr.optimized_rank,
                achieved_rank: achieved,
                metrics: evaluate(&params)?,
            });
        }
    }
    Ok(CompressionReport { rows })
}
