//! Signal-quality metrics between an original `x` and a reconstruction `x̂`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Returned by [`snr`] when the error energy is below [`SNR_ERROR_FLOOR`].
pub const SNR_CAP_DB: f64 = 300.0;
pub const SNR_ERROR_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub snr_db: f64,
    pub cc: f64,
    pub prd: f64,
    pub rmse: f64,
}

fn check_pair(x: &[f64], x_hat: &[f64]) -> Result<()> {
    ensure!(!x.is_empty(), "metrics need non-empty signals");
    ensure!(
        x.len() == x_hat.len(),
        "signal lengths differ: {} vs {}",
        x.len(),
        x_hat.len()
    );
    Ok(())
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn error_energy(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `10 log10(Σx² / Σ(x - x̂)²)` in dB, capped at [`SNR_CAP_DB`].
pub fn snr(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    let sig = energy(x);
    ensure!(sig > 0.0, "snr of a zero-energy reference is undefined");
    let err = error_energy(x, x_hat);
    if err < SNR_ERROR_FLOOR {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (sig / err).log10()).min(SNR_CAP_DB))
}

/// Pearson correlation coefficient.
pub fn cc(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = x_hat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(x_hat) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    ensure!(
        sxx > 0.0 && syy > 0.0,
        "correlation is undefined for a constant signal"
    );
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `100 sqrt(Σ(x - x̂)² / Σx²)` in percent.
pub fn prd(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    let sig = energy(x);
    ensure!(sig > 0.0, "prd of a zero-energy reference is undefined");
    Ok(100.0 * (error_energy(x, x_hat) / sig).sqrt())
}

pub fn rmse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_pair(x, x_hat)?;
    Ok((error_energy(x, x_hat) / x.len() as f64).sqrt())
}

pub fn evaluate(x: &[f64], x_hat: &[f64]) -> Result<MetricSet> {
    Ok(MetricSet {
        snr_db: snr(x, x_hat)?,
        cc: cc(x, x_hat)?,
        prd: prd(x, x_hat)?,
        rmse: rmse(x, x_hat)?,
    })
}

/// Field-wise mean over fragments.
pub fn mean(sets: &[MetricSet]) -> Result<MetricSet> {
    ensure!(!sets.is_empty(), "cannot average an empty metric list");
    let n = sets.len() as f64;
    let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
    Ok(MetricSet {
        snr_db: avg(|m| m.snr_db),
        cc: avg(|m| m.cc),
        prd: avg(|m| m.prd),
        rmse: avg(|m| m.rmse),
    })
}
