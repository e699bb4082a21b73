use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Squared-norm floor below which a reflection vector is considered degenerate.
pub const EPS_MIN: f64 = 1e-30;

/// An ordered product of Householder reflections `H_n(u_n) ... H_{n-m+1}(u_{n-m+1})`,
/// optionally followed (on the right) by the sign factor `H_1(u1) = diag(1, .., 1, u1)`
/// when `m == n`.
///
/// Column `j` of the parameter matrix holds `u_{n-j}` below `j` structural zeros.
/// When `m == n` only the `n - 1` proper reflections live in the matrix and the
/// sign is stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionStack {
    n: usize,
    m: usize,
    u: DMatrix<f64>,
    sign: f64,
}

impl ReflectionStack {
    /// Builds a stack from an `n x cols` parameter matrix, where `cols` is `m`
    /// for `m < n` and `n - 1` for `m == n`. `sign` is ignored unless `m == n`.
    pub fn new(n: usize, m: usize, u: DMatrix<f64>, sign: f64) -> Result<Self> {
        if n == 0 || m == 0 || m > n {
            return Err(Error::Shape(format!(
                "need 1 <= m <= n, got n = {n}, m = {m}"
            )));
        }
        let cols = Self::stored_columns(n, m);
        if u.nrows() != n || u.ncols() != cols {
            return Err(Error::Shape(format!(
                "parameter matrix must be {n}x{cols}, got {}x{}",
                u.nrows(),
                u.ncols()
            )));
        }
        for j in 0..cols {
            if (0..j).any(|i| u[(i, j)] != 0.0) {
                return Err(Error::Shape(format!(
                    "column {j} has nonzero entries above row {j}"
                )));
            }
        }
        let sign = if m == n { sign } else { 1.0 };
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Precondition(format!(
                "sign factor must be -1 or +1, got {sign}"
            )));
        }
        let stack = Self { n, m, u, sign };
        stack.squared_norms()?;
        Ok(stack)
    }

    /// Builds a stack from reflection vectors ordered `u_n, u_{n-1}, ...`; the
    /// `j`-th vector must have length `n - j`.
    pub fn from_vectors(n: usize, vectors: &[Vec<f64>], sign: Option<f64>) -> Result<Self> {
        let m = vectors.len() + usize::from(sign.is_some());
        if sign.is_some() && m != n {
            return Err(Error::Shape(format!(
                "a sign factor requires n - 1 reflection vectors, got {}",
                vectors.len()
            )));
        }
        let mut u = DMatrix::zeros(n, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.len() + j != n {
                return Err(Error::Shape(format!(
                    "vector {j} must have length {}, got {}",
                    n.saturating_sub(j),
                    v.len()
                )));
            }
            u.column_mut(j).rows_mut(j, n - j).copy_from_slice(v);
        }
        Self::new(n, m, u, sign.unwrap_or(1.0))
    }

    /// Reflection entries drawn from Uniform(-1, 1); the sign (when present) is
    /// +1 or -1 with equal probability.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || m == 0 || m > n {
            return Err(Error::Shape(format!(
                "need 1 <= m <= n, got n = {n}, m = {m}"
            )));
        }
        let cols = Self::stored_columns(n, m);
        let mut u = DMatrix::zeros(n, cols);
        for j in 0..cols {
            for i in j..n {
                u[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Self::new(n, m, u, sign)
    }

    pub fn stored_columns(n: usize, m: usize) -> usize {
        if m == n {
            n - 1
        } else {
            m
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of proper Householder reflections held in the parameter matrix.
    pub fn cols(&self) -> usize {
        self.u.ncols()
    }

    pub fn has_sign(&self) -> bool {
        self.m == self.n
    }

    /// The `u1` factor; always `1.0` when `m < n`.
    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Full column `j` including its structural zeros.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.u.as_slice()[j * self.n..(j + 1) * self.n]
    }

    /// The reflection vector `u_{n-j}`: rows `j..n` of column `j`.
    pub fn tail(&self, j: usize) -> &[f64] {
        &self.column(j)[j..]
    }

    pub(crate) fn u_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.u
    }

    pub(crate) fn set_sign_raw(&mut self, sign: f64) {
        self.sign = sign;
    }

    /// `(‖u_n‖², ‖u_{n-1}‖², ...)` over the stored columns; fails on any vector
    /// below [`EPS_MIN`].
    pub fn squared_norms(&self) -> Result<Vec<f64>> {
        (0..self.cols())
            .map(|j| {
                let norm_sq: f64 = self.tail(j).iter().map(|v| v * v).sum();
                if norm_sq >= EPS_MIN && norm_sq.is_finite() {
                    Ok(norm_sq)
                } else {
                    Err(Error::InvalidReflection { column: j, norm_sq })
                }
            })
            .collect()
    }

    /// Multiplies by `H_1(u1)` in place (a no-op when `m < n`).
    pub(crate) fn apply_sign(&self, x: &mut [f64]) {
        if self.has_sign() && self.sign < 0.0 {
            if let Some(last) = x.last_mut() {
                *last = -*last;
            }
        }
    }

    /// Sets every structural-zero entry of `mat` (same shape as the parameter
    /// matrix) to exactly `0.0`.
    pub fn mask_structural(mat: &mut DMatrix<f64>) {
        let cols = mat.ncols();
        for j in 0..cols {
            for i in 0..j.min(mat.nrows()) {
                mat[(i, j)] = 0.0;
            }
        }
    }
}

/// Applies `H_k(u)` (acting on the trailing `k` coordinates) to `x`.
pub fn reflect_apply(k: usize, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if k < 2 || k > n || u.len() != k {
        return Err(Error::Shape(format!(
            "reflection H_k needs 2 <= k <= n and |u| = k; got k = {k}, |u| = {}, n = {n}",
            u.len()
        )));
    }
    let norm_sq: f64 = u.iter().map(|v| v * v).sum();
    if !(norm_sq >= EPS_MIN && norm_sq.is_finite()) {
        return Err(Error::InvalidReflection { column: n - k, norm_sq });
    }
    let mut out = x.to_vec();
    let tail = &mut out[n - k..];
    let dot: f64 = u.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
    let coeff = 2.0 * dot / norm_sq;
    for (t, ui) in tail.iter_mut().zip(u) {
        *t -= coeff * ui;
    }
    Ok(out)
}
