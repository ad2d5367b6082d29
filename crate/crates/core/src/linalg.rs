//! Dense row-major matrices and the handful of kernels the rest of the crate
//! needs: products, thin Householder QR and a one-sided Jacobi SVD.
//!
//! Every routine is sequential and sums in a fixed order, so results are
//! bitwise reproducible for a given input.

use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            "matrix entries must be finite"
        );
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            "ragged rows in matrix literal"
        );
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Diagonal matrix with `values` on the diagonal.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        Matrix::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        ensure!(
            self.shape() == other.shape(),
            "shape mismatch in subtraction: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, k: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }
}

/// `a * b`. Each output row is accumulated over `k` in ascending groups of
/// four, so the summation order is fixed.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure!(
        a.cols == b.rows,
        "matmul dimension mismatch: {}x{} * {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let n = b.cols;
    let mut c = Matrix::zeros(a.rows, n);
    let brow = |k: usize| &b.data[k * n..(k + 1) * n];
    for i in 0..a.rows {
        let arow = a.row(i);
        let crow = &mut c.data[i * n..(i + 1) * n];
        let mut k = 0;
        while k + 4 <= a.cols {
            let (a0, a1, a2, a3) = (arow[k], arow[k + 1], arow[k + 2], arow[k + 3]);
            let (b0, b1, b2, b3) = (brow(k), brow(k + 1), brow(k + 2), brow(k + 3));
            let (b0, b1, b2, b3) = (&b0[..n], &b1[..n], &b2[..n], &b3[..n]);
            for (j, cij) in crow.iter_mut().enumerate() {
                *cij += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            k += 4;
        }
        for (kk, &aik) in arow.iter().enumerate().skip(k) {
            for (cij, bkj) in crow.iter_mut().zip(brow(kk)) {
                *cij += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// `aᵀ * b` without materialising the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure!(
        a.rows == b.rows,
        "matmul_tn dimension mismatch: ({}x{})ᵀ * {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let n = b.cols;
    let mut c = Matrix::zeros(a.cols, n);
    let mut k = 0;
    while k + 4 <= a.rows {
        let (a0, a1, a2, a3) = (a.row(k), a.row(k + 1), a.row(k + 2), a.row(k + 3));
        let (b0, b1, b2, b3) = (b.row(k), b.row(k + 1), b.row(k + 2), b.row(k + 3));
        for i in 0..a.cols {
            let (x0, x1, x2, x3) = (a0[i], a1[i], a2[i], a3[i]);
            let crow = &mut c.data[i * n..(i + 1) * n];
            for (j, cij) in crow.iter_mut().enumerate() {
                *cij += x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
            }
        }
        k += 4;
    }
    for kk in k..a.rows {
        let arow = a.row(kk);
        let brow = b.row(kk);
        for (i, &aki) in arow.iter().enumerate() {
            let crow = &mut c.data[i * n..(i + 1) * n];
            for (cij, bkj) in crow.iter_mut().zip(brow) {
                *cij += aki * bkj;
            }
        }
    }
    Ok(c)
}

const NT_BLOCK_BYTES: usize = 128 * 1024;

/// `a * bᵀ`; each entry is a dot product of two contiguous rows.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure!(
        a.cols == b.cols,
        "matmul_nt dimension mismatch: {}x{} * ({}x{})ᵀ",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut c = Matrix::zeros(a.rows, b.rows);
    // Visit b in blocks of rows that stay cache resident across all of a.
    let block = (NT_BLOCK_BYTES / (8 * b.cols.max(1))).max(1);
    for j0 in (0..b.rows).step_by(block) {
        let j1 = (j0 + block).min(b.rows);
        for i in 0..a.rows {
            let arow = a.row(i);
            for j in j0..j1 {
                c.data[i * b.rows + j] = dot(arow, b.row(j));
            }
        }
    }
    Ok(c)
}

/// Matrix-vector product `a * x`.
pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    ensure!(
        a.cols == x.len(),
        "matvec dimension mismatch: {}x{} * {}",
        a.rows,
        a.cols,
        x.len()
    );
    Ok((0..a.rows).map(|i| dot(a.row(i), x)).collect())
}

/// Inner product with eight interleaved partial sums (fixed order, so the
/// result is deterministic).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin Householder QR.
///
/// For an `m x n` input with `k = min(m, n)` returns `q` (`m x k`, orthonormal
/// columns) and `r` (`k x n`, upper trapezoidal) with `q * r = a`. The
/// diagonal of `r` is made nonnegative. Rank-deficient inputs are fine: a zero
/// column leaves its reflector as the identity.
pub fn qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    // Work on columns as contiguous rows.
    let mut cols = a.transpose();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);

    for j in 0..k {
        let x = &cols.row(j)[j..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.to_vec();
        if norm == 0.0 {
            reflectors.push(vec![0.0; m - j]);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(vec![0.0; m - j]);
            continue;
        }
        v.iter_mut().for_each(|t| *t /= vnorm);
        for c in j..n {
            let col = &mut cols.row_mut(c)[j..];
            let proj = dot(&v, col);
            axpy(-2.0 * proj, &v, col);
        }
        reflectors.push(v);
    }

    let mut r = Matrix::zeros(k, n);
    for i in 0..k {
        for c in i..n {
            r.set(i, c, cols.get(c, i));
        }
    }

    // Columns of q: q e_j = H_0 H_1 ... H_{k-1} e_j.
    let mut qt = Matrix::zeros(k, m);
    for j in 0..k {
        let col = qt.row_mut(j);
        col[j] = 1.0;
        for (h, v) in reflectors.iter().enumerate().rev() {
            let tail = &mut col[h..];
            let proj = dot(v, tail);
            if proj != 0.0 {
                axpy(-2.0 * proj, v, tail);
            }
        }
    }

    for i in 0..k {
        if r.get(i, i) < 0.0 {
            r.row_mut(i).iter_mut().for_each(|t| *t = -*t);
            qt.row_mut(i).iter_mut().for_each(|t| *t = -*t);
        }
    }
    Ok((qt.transpose(), r))
}

/// Singular value decomposition `a = u * diag(s) * vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `m x k` with orthonormal columns, `k = min(m, n)`.
    pub u: Matrix,
    /// Descending, nonnegative, length `k`.
    pub s: Vec<f64>,
    /// `n x k` with orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    /// `u[:, ..r] * diag(s[..r]) * v[:, ..r]ᵀ`.
    pub fn truncated(&self, r: usize) -> Matrix {
        rank_r_product(&self.u, &self.s, &self.v, r)
    }
}

/// Sweep cap for the Jacobi iteration; well-conditioned inputs of a few
/// hundred columns converge in under 15.
pub const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &Matrix) -> Result<Svd> {
    ensure!(
        a.as_slice().iter().all(|v| v.is_finite()),
        "svd input must be finite"
    );
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    // Row j of `work` is column j of A V; row j of `vt` is column j of V.
    let mut work = a.transpose();
    let mut vt = Matrix::identity(n);
    let tol = f64::EPSILON;
    // Columns this small are numerically zero; rotating them never converges.
    let negligible = (f64::EPSILON * a.frobenius_norm()).powi(2);

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = work.row(p);
                    let cq = work.row(q);
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut work, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge within {JACOBI_MAX_SWEEPS} sweeps ({m}x{n})"
        )));
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| dot(work.row(j), work.row(j)).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let smax = norms[order[0]];
    let cutoff = smax * (m as f64) * f64::EPSILON;
    let mut ut = Matrix::zeros(n, m);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        v_sorted.row_mut(dst).copy_from_slice(vt.row(src));
        if sigma > cutoff && sigma > 0.0 {
            s.push(sigma);
            let urow = ut.row_mut(dst);
            for (u, w) in urow.iter_mut().zip(work.row(src)) {
                *u = w / sigma;
            }
        } else {
            s.push(0.0);
            deficient.push(dst);
        }
    }
    complete_orthonormal_rows(&mut ut, &deficient);

    Ok(Svd {
        u: ut.transpose(),
        s,
        v: v_sorted.transpose(),
    })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols;
    let (head, tail) = m.data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed rows with unit vectors orthogonal to every other row,
/// by Gram-Schmidt over the standard basis.
fn complete_orthonormal_rows(rows: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let dim = rows.cols;
    let mut filled: Vec<bool> = vec![true; rows.rows];
    for &i in missing {
        filled[i] = false;
    }
    let mut candidate = 0;
    for &target in missing {
        loop {
            assert!(candidate < dim, "cannot complete orthonormal basis");
            let mut v = vec![0.0; dim];
            v[candidate] = 1.0;
            candidate += 1;
            // Two passes of Gram-Schmidt for stability.
            for _ in 0..2 {
                for (i, ok) in filled.iter().enumerate() {
                    if *ok {
                        let proj = dot(rows.row(i), &v);
                        axpy(-proj, rows.row(i), &mut v);
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|t| *t /= norm);
                rows.row_mut(target).copy_from_slice(&v);
                filled[target] = true;
                break;
            }
        }
    }
}

/// `u[:, ..r] * diag(s[..r]) * v[:, ..r]ᵀ`.
pub fn rank_r_product(u: &Matrix, s: &[f64], v: &Matrix, r: usize) -> Matrix {
    let r = r.min(s.len()).min(u.cols).min(v.cols);
    let mut out = Matrix::zeros(u.rows, v.rows);
    for i in 0..u.rows {
        let orow = &mut out.data[i * v.rows..(i + 1) * v.rows];
        for (t, &st) in s[..r].iter().enumerate() {
            let coef = u.get(i, t) * st;
            if coef == 0.0 {
                continue;
            }
            for (j, o) in orow.iter_mut().enumerate() {
                *o += coef * v.data[j * v.cols + t];
            }
        }
    }
    out
}
