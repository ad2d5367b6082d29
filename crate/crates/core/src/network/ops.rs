//! Layer primitives on `channels x width` feature maps stored as matrices.

use crate::error::{ensure, Result};
use crate::linalg::{matmul, Matrix};

/// Gathers sliding windows into columns.
///
/// Output is `(channels * taps) x out_width` with
/// `out_width = width - taps + 2 * padding + 1`; row `n * taps + p`, column
/// `j` holds `input[n, j + p - padding]`, zero outside the signal.
pub fn im2col(input: &Matrix, taps: usize, padding: usize) -> Matrix {
    let (channels, width) = input.shape();
    let out_width = (width + 2 * padding + 1).saturating_sub(taps);
    let mut cols = Matrix::zeros(channels * taps, out_width);
    for n in 0..channels {
        let src = input.row(n);
        for p in 0..taps {
            let dst = cols.row_mut(n * taps + p);
            for (j, d) in dst.iter_mut().enumerate() {
                // Index into the unpadded signal is j + p - padding.
                let idx = j + p;
                if idx >= padding && idx - padding < width {
                    *d = src[idx - padding];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column entries back onto the signal,
/// summing overlapping contributions.
pub fn col2im(
    cols: &Matrix,
    channels: usize,
    width: usize,
    taps: usize,
    padding: usize,
) -> Result<Matrix> {
    let out_width = (width + 2 * padding + 1).saturating_sub(taps);
    ensure!(
        cols.shape() == (channels * taps, out_width),
        "col2im expects {}x{} columns, got {:?}",
        channels * taps,
        out_width,
        cols.shape()
    );
    let mut out = Matrix::zeros(channels, width);
    for n in 0..channels {
        for p in 0..taps {
            let src = cols.row(n * taps + p);
            let dst = out.row_mut(n);
            for (j, s) in src.iter().enumerate() {
                let idx = j + p;
                if idx >= padding && idx - padding < width {
                    dst[idx - padding] += s;
                }
            }
        }
    }
    Ok(out)
}

/// `S = K * I_col + b`, bias broadcast along positions.
pub fn conv_forward(icol: &Matrix, kernel: &Matrix, bias: &[f64]) -> Result<Matrix> {
    ensure!(
        bias.len() == kernel.rows(),
        "bias length {} does not match {} filters",
        bias.len(),
        kernel.rows()
    );
    let mut s = matmul(kernel, icol)?;
    for (m, b) in bias.iter().enumerate() {
        s.row_mut(m).iter_mut().for_each(|v| *v += b);
    }
    Ok(s)
}

pub fn relu(s: &Matrix) -> Matrix {
    let mut c = s.clone();
    c.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    c
}

/// Passes gradient where the pre-activation was strictly positive.
pub fn relu_backward(grad: &Matrix, pre: &Matrix) -> Result<Matrix> {
    ensure!(
        grad.shape() == pre.shape(),
        "relu backward shape mismatch: {:?} vs {:?}",
        grad.shape(),
        pre.shape()
    );
    let mut out = grad.clone();
    for (g, s) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if *s <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// `P[m, k] = (C[m, 2k] + C[m, 2k+1]) / 2`; a trailing odd sample is dropped.
pub fn avgpool(c: &Matrix) -> Matrix {
    let (rows, width) = c.shape();
    let half = width / 2;
    Matrix::from_fn(rows, half, |m, k| {
        0.5 * (c.get(m, 2 * k) + c.get(m, 2 * k + 1))
    })
}

/// `dC[m, j] = dP[m, j/2] / 2`; a dropped trailing sample gets zero.
pub fn avgpool_backward(grad: &Matrix, input_width: usize) -> Result<Matrix> {
    ensure!(
        grad.cols() == input_width / 2,
        "pool backward: gradient width {} does not match input width {}",
        grad.cols(),
        input_width
    );
    let mut out = Matrix::zeros(grad.rows(), input_width);
    for m in 0..grad.rows() {
        let g = grad.row(m);
        let dst = out.row_mut(m);
        for (k, gk) in g.iter().enumerate() {
            dst[2 * k] = 0.5 * gk;
            dst[2 * k + 1] = 0.5 * gk;
        }
    }
    Ok(out)
}

/// `U[m, j] = C[m, j/2]`.
pub fn upsample(c: &Matrix) -> Matrix {
    let (rows, width) = c.shape();
    Matrix::from_fn(rows, 2 * width, |m, j| c.get(m, j / 2))
}

/// `dC[m, j] = dU[m, 2j] + dU[m, 2j+1]`.
pub fn upsample_backward(grad: &Matrix) -> Result<Matrix> {
    ensure!(
        grad.cols().is_multiple_of(2),
        "upsample backward needs an even width, got {}",
        grad.cols()
    );
    let (rows, width) = grad.shape();
    Ok(Matrix::from_fn(rows, width / 2, |m, j| {
        grad.get(m, 2 * j) + grad.get(m, 2 * j + 1)
    }))
}

/// Row-major flatten: all positions of channel 0, then channel 1, ...
pub fn flatten(r: &Matrix) -> Vec<f64> {
    r.as_slice().to_vec()
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: Vec<f64>, channels: usize, width: usize) -> Result<Matrix> {
    ensure!(
        flat.len() == channels * width,
        "cannot reshape {} values into {}x{}",
        flat.len(),
        channels,
        width
    );
    // Gradients may legitimately be non-finite during a diverging run; keep them.
    let mut m = Matrix::zeros(channels, width);
    m.as_mut_slice().copy_from_slice(&flat);
    Ok(m)
}
