//! Discrete orthonormal Tchebichef polynomials and the moment transform.
//!
//! Row `p` of the basis matrix holds `t_p(x)` for `x = 0..N-1`. Moments of a
//! signal `X` (a row vector) are `X Qᵀ` and the signal is recovered as
//! `T Q`; at full order the transform is orthogonal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{ensure, Result};
use crate::linalg::{dot, Matrix};

#[derive(Clone, Debug)]
pub struct TchebichefBasis {
    length: usize,
    order: usize,
    q: Matrix,
}

/// Moment-domain amplitudes of one signal.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub coeffs: Vec<f64>,
    pub basis_length: usize,
}

impl TchebichefBasis {
    /// Builds polynomials `t_0..=t_order` on `n` points.
    ///
    /// The polynomials are those of the three-term recurrence in the order
    /// index (see [`order_recurrence`]), but that recurrence loses all
    /// accuracy beyond a few dozen orders. Values are instead generated along
    /// `x` for the first half of the support and mirrored with
    /// `t_p(N-1-x) = (-1)^p t_p(x)`:
    ///
    /// * `t_0(0) = 1/sqrt(N)`,
    ///   `t_p(0) = -sqrt((N-p)/(N+p)) sqrt((2p+1)/(2p-1)) t_{p-1}(0)`
    /// * `t_p(1) = (1 + p(p+1)/(1-N)) t_p(0)`
    /// * `t_p(x) = g1 t_p(x-1) + g2 t_p(x-2)` with
    ///   `g1 = (-p(p+1) - (2x-1)(x-N-1) - x) / (x(N-x))` and
    ///   `g2 = (x-1)(x-N-1) / (x(N-x))`.
    pub fn new(n: usize, order: usize) -> Result<Self> {
        ensure!(n >= 2, "basis length must be at least 2, got {n}");
        ensure!(
            order >= 1 && order < n,
            "basis order must satisfy 1 <= order <= n-1 (order={order}, n={n})"
        );
        let nf = n as f64;
        let half = n.div_ceil(2);
        let mut q = Matrix::zeros(order + 1, n);
        let mut t_at_zero = 1.0 / nf.sqrt();
        for p in 0..=order {
            let pf = p as f64;
            if p > 0 {
                t_at_zero *=
                    -((nf - pf) / (nf + pf)).sqrt() * ((2.0 * pf + 1.0) / (2.0 * pf - 1.0)).sqrt();
            }
            let row = q.row_mut(p);
            row[0] = t_at_zero;
            row[1] = (1.0 + pf * (pf + 1.0) / (1.0 - nf)) * t_at_zero;
            for x in 2..half {
                let xf = x as f64;
                let denom = xf * (nf - xf);
                let g1 = (-pf * (pf + 1.0) - (2.0 * xf - 1.0) * (xf - nf - 1.0) - xf) / denom;
                let g2 = (xf - 1.0) * (xf - nf - 1.0) / denom;
                row[x] = g1 * row[x - 1] + g2 * row[x - 2];
            }
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            for x in half..n {
                row[x] = sign * row[n - 1 - x];
            }
        }
        Ok(TchebichefBasis {
            length: n,
            order,
            q,
        })
    }

    /// Full-order basis (`order = n - 1`).
    pub fn full(n: usize) -> Result<Self> {
        TchebichefBasis::new(n, n.saturating_sub(1))
    }

    /// Shared full-order basis for length `n`, built once per process.
    pub fn cached(n: usize) -> Result<Arc<TchebichefBasis>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<TchebichefBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(b) = guard.get(&n) {
            return Ok(Arc::clone(b));
        }
        let basis = Arc::new(TchebichefBasis::full(n)?);
        guard.insert(n, Arc::clone(&basis));
        Ok(basis)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of moments produced by `forward`.
    pub fn num_moments(&self) -> usize {
        self.order + 1
    }

    /// The `(order+1) x N` polynomial matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    /// Moments `X Qᵀ` of a spatial signal.
    pub fn forward(&self, signal: &[f64]) -> Result<MomentVector> {
        ensure!(
            signal.len() == self.length,
            "signal length {} does not match basis length {}",
            signal.len(),
            self.length
        );
        let coeffs = (0..=self.order)
            .map(|p| dot(self.q.row(p), signal))
            .collect();
        Ok(MomentVector {
            coeffs,
            basis_length: self.length,
        })
    }

    /// Spatial reconstruction `T Q`.
    pub fn inverse(&self, moments: &MomentVector) -> Result<Vec<f64>> {
        self.inverse_coeffs(&moments.coeffs)
    }

    pub fn inverse_coeffs(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            coeffs.len() == self.num_moments(),
            "moment vector length {} does not match basis order+1 = {}",
            coeffs.len(),
            self.num_moments()
        );
        let mut out = vec![0.0; self.length];
        for (p, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(self.q.row(p)) {
                *o += c * t;
            }
        }
        Ok(out)
    }
}

/// Direct evaluation of the order-index recurrence
///
/// `t_p(x) = a_p (2x + 1 - N) t_{p-1}(x) + b_p t_{p-2}(x)`,
/// `a_p = (1/p) sqrt((4p² - 1) / (N² - p²))`,
/// `b_p = ((1 - p)/p) sqrt((2p + 1)/(2p - 3)) sqrt((N² - (p-1)²)/(N² - p²))`,
///
/// seeded by `t_0 = 1/sqrt(N)` and `t_1 = (2x + 1 - N) sqrt(3 / (N(N² - 1)))`.
/// Accurate only for small `N`; kept as a cross-check of [`TchebichefBasis::new`].
pub fn order_recurrence(n: usize, order: usize) -> Matrix {
    let nf = n as f64;
    let mut q = Matrix::zeros(order + 1, n);
    let t0 = 1.0 / nf.sqrt();
    q.row_mut(0).iter_mut().for_each(|v| *v = t0);
    if order == 0 {
        return q;
    }
    let c1 = (3.0 / (nf * (nf * nf - 1.0))).sqrt();
    for (x, v) in q.row_mut(1).iter_mut().enumerate() {
        *v = (2.0 * x as f64 + 1.0 - nf) * c1;
    }
    for p in 2..=order {
        let pf = p as f64;
        let denom = nf * nf - pf * pf;
        let a = ((4.0 * pf * pf - 1.0) / denom).sqrt() / pf;
        let b = (1.0 - pf) / pf
            * ((2.0 * pf + 1.0) / (2.0 * pf - 3.0)).sqrt()
            * ((nf * nf - (pf - 1.0) * (pf - 1.0)) / denom).sqrt();
        for x in 0..n {
            let v = a * (2.0 * x as f64 + 1.0 - nf) * q.get(p - 1, x) + b * q.get(p - 2, x);
            q.set(p, x, v);
        }
    }
    q
}
