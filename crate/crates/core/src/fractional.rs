//! Caputo fractional derivatives of power terms and the fractional
//! gradient-descent update shared by every trainable tensor.
//!
//! With lower limit zero the Caputo derivative of `w^k` is
//! `Γ(k+1) w^(k-α) / Γ(k-α+1)`. Backpropagation only needs the `k = 1` case
//! (chain-rule factor on the integer-order gradient) and the `k = 2` case
//! (the L2 penalty).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{ensure, Result};

/// Magnitude floor applied before raising a parameter to `1 - α`.
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracConfig {
    /// Fractional order, in (0, 2). `1.0` is ordinary gradient descent.
    pub alpha: f64,
    /// Learning rate.
    pub eta: f64,
    /// L2 weight on kernels and the FC weight matrix.
    pub lambda: f64,
    pub epsilon_floor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FracConfig {
    fn default() -> Self {
        FracConfig {
            alpha: 1.2,
            eta: 5e-4,
            lambda: 1e-5,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            epochs: 300,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl FracConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha > 0.0 && self.alpha < 2.0,
            "alpha must lie in (0, 2), got {}",
            self.alpha
        );
        ensure!(self.eta > 0.0, "eta must be positive, got {}", self.eta);
        ensure!(
            self.lambda >= 0.0,
            "lambda must be nonnegative, got {}",
            self.lambda
        );
        ensure!(
            self.epsilon_floor > 0.0,
            "epsilon floor must be positive, got {}",
            self.epsilon_floor
        );
        ensure!(self.batch_size >= 1, "batch size must be at least 1");
        Ok(())
    }

    /// Precomputes the Gamma constants for this order.
    pub fn factors(&self) -> FracFactors {
        FracFactors::new(self.alpha, self.epsilon_floor)
    }
}

/// `D^α w = max(|w|, ε)^(1-α) / Γ(2-α)`.
///
/// Negative bases use their magnitude so the factor is always positive and
/// the descent direction matches the integer-order gradient. Returns exactly
/// `1.0` at `α = 1`.
pub fn caputo_power_factor(w: f64, alpha: f64) -> f64 {
    FracFactors::new(alpha, DEFAULT_EPSILON_FLOOR).power(w)
}

/// `(λ/2) D^α w² = λ sign(w) |w|^(2-α) / Γ(3-α)`; exactly `λ w` at `α = 1`.
pub fn caputo_reg_term(w: f64, alpha: f64, lambda: f64) -> f64 {
    FracFactors::new(alpha, DEFAULT_EPSILON_FLOOR).reg(w, lambda)
}

/// Gamma values for one fractional order, so the inner update loop does not
/// re-evaluate them per element.
#[derive(Clone, Copy, Debug)]
pub struct FracFactors {
    alpha: f64,
    floor: f64,
    inv_gamma_2: f64,
    inv_gamma_3: f64,
}

impl FracFactors {
    pub fn new(alpha: f64, floor: f64) -> Self {
        FracFactors {
            alpha,
            floor,
            inv_gamma_2: 1.0 / gamma(2.0 - alpha),
            inv_gamma_3: 1.0 / gamma(3.0 - alpha),
        }
    }

    #[inline]
    pub fn is_integer_order(&self) -> bool {
        self.alpha == 1.0
    }

    #[inline]
    pub fn power(&self, w: f64) -> f64 {
        if self.is_integer_order() {
            return 1.0;
        }
        w.abs().max(self.floor).powf(1.0 - self.alpha) * self.inv_gamma_2
    }

    #[inline]
    pub fn reg(&self, w: f64, lambda: f64) -> f64 {
        if self.is_integer_order() {
            return lambda * w;
        }
        if w == 0.0 {
            return 0.0;
        }
        lambda * w.signum() * w.abs().powf(2.0 - self.alpha) * self.inv_gamma_3
    }
}

/// In-place fractional step on one tensor:
/// `θ ← θ - η (g ⊙ D^α θ + reg(θ))`, where `g` is the data-term gradient and
/// the penalty is only added when `regularize` is set (kernels and FC
/// weights; never biases).
pub fn frac_update(
    param: &mut [f64],
    grad: &[f64],
    cfg: &FracConfig,
    regularize: bool,
) -> Result<()> {
    ensure!(
        param.len() == grad.len(),
        "parameter/gradient length mismatch: {} vs {}",
        param.len(),
        grad.len()
    );
    let f = cfg.factors();
    let lambda = if regularize { cfg.lambda } else { 0.0 };
    for (w, g) in param.iter_mut().zip(grad) {
        let step = g * f.power(*w) + f.reg(*w, lambda);
        *w -= cfg.eta * step;
    }
    Ok(())
}
