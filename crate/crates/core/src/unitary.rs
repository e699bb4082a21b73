//! Complex unitary chains and their real orthogonal lift.
//!
//! A unitary `W = A + iB` acting on `z` is equivalent to the real block matrix
//! `[[A, -B], [B, A]]` acting on `(Re z; Im z)`. This module builds unitary
//! matrices from complex reflections and a diagonal phase factor (forward
//! only) and provides modReLU in both representations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::householder::EPS_MIN;

/// `Ĥ_n(u_n) ... Ĥ_{n-m+1}(u_{n-m+1}) Ĥ_1(theta)` with `Ĥ_1(theta) = diag(e^{i theta})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexReflectionStack {
    n: usize,
    /// Column `j` holds `u_{n-j}` below `j` zeros, `n x m` column-major.
    u: Vec<Complex64>,
    m: usize,
    theta: Vec<f64>,
}

impl ComplexReflectionStack {
    /// `vectors` are ordered `u_n, u_{n-1}, ...`, each one shorter than the
    /// last; at most `n - 1` of them.
    pub fn new(n: usize, vectors: &[Vec<Complex64>], theta: Vec<f64>) -> Result<Self> {
        if n == 0 || theta.len() != n || vectors.len() > n - 1 {
            return Err(Error::Shape(format!(
                "need n >= 1, |theta| = n and at most n - 1 vectors (n = {n}, |theta| = {}, {} vectors)",
                theta.len(),
                vectors.len()
            )));
        }
        let m = vectors.len();
        let mut u = vec![Complex64::new(0.0, 0.0); n * m];
        for (j, v) in vectors.iter().enumerate() {
            if v.len() + j != n {
                return Err(Error::Shape(format!(
                    "vector {j} must have length {}, got {}",
                    n - j,
                    v.len()
                )));
            }
            let norm_sq: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            if !(norm_sq >= EPS_MIN && norm_sq.is_finite()) {
                return Err(Error::InvalidReflection { column: j, norm_sq });
            }
            u[j * n + j..(j + 1) * n].copy_from_slice(v);
        }
        Ok(Self { n, u, m, theta })
    }

    /// The full chain: `n - 1` reflections with entries uniform in the unit
    /// square and phases uniform in `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let vectors: Vec<Vec<Complex64>> = (0..n.saturating_sub(1))
            .map(|j| {
                (0..n - j)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let theta = (0..n)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Self::new(n, &vectors, theta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Dense `W`, by applying the chain to each basis vector.
    pub fn materialize(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let mut w = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for c in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[c] = Complex64::new(1.0, 0.0);
            let col = self.apply(&e);
            w.column_mut(c).copy_from_slice(&col);
        }
        w
    }

    fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = z
            .iter()
            .zip(&self.theta)
            .map(|(zi, &t)| zi * Complex64::from_polar(1.0, t))
            .collect();
        for j in (0..self.m).rev() {
            let u = &self.u[j * n..(j + 1) * n];
            let norm_sq: f64 = u[j..].iter().map(|c| c.norm_sqr()).sum();
            // u* x
            let dot: Complex64 = u[j..].iter().zip(&x[j..]).map(|(a, b)| a.conj() * b).sum();
            let coeff = dot * (2.0 / norm_sq);
            for i in j..n {
                x[i] -= coeff * u[i];
            }
        }
        x
    }
}

/// Applies the unitary chain to `z`.
pub fn unitary_chain_matvec(stack: &ComplexReflectionStack, z: &[Complex64]) -> Result<Vec<Complex64>> {
    if z.len() != stack.n {
        return Err(Error::Shape(format!(
            "vector has length {}, expected {}",
            z.len(),
            stack.n
        )));
    }
    Ok(stack.apply(z))
}

/// `[[Re W, -Im W], [Im W, Re W]]`.
pub fn lift_to_real(w: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = w.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = w[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `(Re z; Im z)`.
pub fn lift_vector(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.re).chain(z.iter().map(|c| c.im)).collect()
}

pub fn unlift_vector(a: &[f64]) -> Result<Vec<Complex64>> {
    if !a.len().is_multiple_of(2) {
        return Err(Error::Shape(format!("odd-length real vector ({})", a.len())));
    }
    let n = a.len() / 2;
    Ok((0..n).map(|i| Complex64::new(a[i], a[i + n])).collect())
}

/// `|W* W - I|_F`.
pub fn unitarity_error(w: &DMatrix<Complex64>) -> f64 {
    let n = w.nrows();
    let gram = w.adjoint() * w;
    (gram - DMatrix::<Complex64>::identity(n, n)).norm()
}

/// modReLU: `(|z| + b) z / |z|` where `|z| + b > 0`, else `0`. `z = 0` maps to `0`.
pub fn modrelu(z: &[Complex64], b: &[f64]) -> Result<Vec<Complex64>> {
    if z.len() != b.len() {
        return Err(Error::Shape(format!(
            "modrelu bias has length {}, expected {}",
            b.len(),
            z.len()
        )));
    }
    Ok(z
        .iter()
        .zip(b)
        .map(|(&zi, &bi)| {
            let r = zi.norm();
            if r == 0.0 || r + bi <= 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                zi * ((r + bi) / r)
            }
        })
        .collect())
}

/// modReLU on a lifted vector: coordinate `i` is paired with `i + n` (or
/// `i - n`), and both share the bias `b[i mod n]`.
pub fn modrelu_real(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if !a.len().is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "modrelu_real needs an even-length input, got {}",
            a.len()
        )));
    }
    let n = a.len() / 2;
    if b.len() != n {
        return Err(Error::Shape(format!(
            "modrelu_real bias has length {}, expected {n}",
            b.len()
        )));
    }
    let mut out = vec![0.0; 2 * n];
    for i in 0..2 * n {
        let pair = (i + n) % (2 * n);
        let r = a[i].hypot(a[pair]);
        let bias = b[i % n];
        if r != 0.0 && r + bias > 0.0 {
            out[i] = (r + bias) / r * a[i];
        }
    }
    Ok(out)
}

/// Outcome of [`lift_checks`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LiftReport {
    pub n: usize,
    /// `|W* W - I|_F` of the chain-built unitary.
    pub unitarity_error: f64,
    /// `|L' L - I|_F` of its real lift `L`.
    pub lift_orthogonality_error: f64,
    /// Largest per-step gap between the complex modReLU RNN and its lift.
    pub rnn_step_error: f64,
    /// Largest `|lift(A B) - lift(A) lift(B)|` over the random pairs.
    pub homomorphism_error: f64,
}

fn random_complex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Builds a random unitary chain of size `n`, runs `steps` of the complex RNN
/// `z_t = modrelu(W z_{t-1} + x_t, b)` next to its lifted real counterpart and
/// checks the lift on `pairs` random matrix products.
pub fn lift_checks<R: Rng + ?Sized>(n: usize, steps: usize, pairs: usize, rng: &mut R) -> Result<LiftReport> {
    let chain = ComplexReflectionStack::random(n, rng)?;
    let w = chain.materialize();
    let lifted = lift_to_real(&w);
    let lift_orthogonality_error = crate::householder::orthogonality_error(&lifted);

    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.1)).collect();
    let mut z = random_complex(rng, n);
    let mut a = lift_vector(&z);
    let mut rnn_step_error = 0.0f64;
    for _ in 0..steps {
        let x = random_complex(rng, n);
        let pre: Vec<Complex64> = unitary_chain_matvec(&chain, &z)?
            .iter()
            .zip(&x)
            .map(|(p, xi)| p + xi)
            .collect();
        z = modrelu(&pre, &b)?;
        let pre_real: Vec<f64> = (&lifted * nalgebra::DVector::from_column_slice(&a))
            .iter()
            .zip(lift_vector(&x))
            .map(|(p, xi)| p + xi)
            .collect();
        a = modrelu_real(&pre_real, &b)?;
        let gap = lift_vector(&z)
            .iter()
            .zip(&a)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        rnn_step_error = rnn_step_error.max(gap);
    }

    let mut homomorphism_error = 0.0f64;
    for _ in 0..pairs {
        let p = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let gap = (lift_to_real(&(&p * &q)) - lift_to_real(&p) * lift_to_real(&q)).amax();
        homomorphism_error = homomorphism_error.max(gap);
    }

    Ok(LiftReport {
        n,
        unitarity_error: unitarity_error(&w),
        lift_orthogonality_error,
        rnn_step_error,
        homomorphism_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn empty_chain_zero_phase_is_identity() {
        let s = ComplexReflectionStack::new(3, &[], vec![0.0; 3]).unwrap();
        let z = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)];
        assert_eq!(unitary_chain_matvec(&s, &z).unwrap(), z);
    }

    #[test]
    fn pure_phase() {
        let s = ComplexReflectionStack::new(1, &[], vec![std::f64::consts::FRAC_PI_2]).unwrap();
        let out = unitary_chain_matvec(&s, &[c(1.0, 0.0)]).unwrap();
        assert!((out[0] - c(0.0, 1.0)).norm() < 1e-16);
    }

    #[test]
    fn random_chain_is_unitary_and_norm_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ComplexReflectionStack::random(8, &mut rng).unwrap();
        assert!(unitarity_error(&s.materialize()) < 1e-12);
        let z: Vec<Complex64> = (0..8).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let out = unitary_chain_matvec(&s, &z).unwrap();
        let n0: f64 = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let n1: f64 = out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((n0 - n1).abs() < 1e-12 * n0);
    }

    #[test]
    fn degenerate_vector_rejected() {
        let err = ComplexReflectionStack::new(2, &[vec![c(0.0, 0.0), c(0.0, 0.0)]], vec![0.0; 2]);
        assert!(matches!(err, Err(Error::InvalidReflection { .. })));
    }

    #[test]
    fn lift_examples() {
        let w = DMatrix::from_element(1, 1, c(0.0, 1.0));
        assert_eq!(
            lift_to_real(&w),
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        );
        let id = DMatrix::<Complex64>::identity(3, 3);
        assert_eq!(lift_to_real(&id), DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn modrelu_examples() {
        let out = modrelu(&[c(3.0, 4.0)], &[-2.0]).unwrap();
        assert!((out[0] - c(1.8, 2.4)).norm() < 1e-15);
        assert_eq!(modrelu(&[c(0.3, 0.4)], &[-0.5]).unwrap()[0], c(0.0, 0.0));
        assert_eq!(modrelu(&[c(0.0, 0.0)], &[1.0]).unwrap()[0], c(0.0, 0.0));
        let z = c(-0.7, 2.5);
        assert!((modrelu(&[z], &[0.0]).unwrap()[0] - z).norm() < 1e-15);

        let real = modrelu_real(&[3.0, 4.0], &[-2.0]).unwrap();
        assert!((real[0] - 1.8).abs() < 1e-15 && (real[1] - 2.4).abs() < 1e-15);
        assert_eq!(modrelu_real(&[3.0, 4.0, 1.0, 1.0], &[-100.0, -100.0]).unwrap(), vec![0.0; 4]);
        assert!(matches!(modrelu_real(&[1.0, 2.0, 3.0], &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn lift_checks_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = lift_checks(6, 5, 5, &mut rng).unwrap();
        assert!(r.unitarity_error < 1e-12);
        assert!(r.lift_orthogonality_error < 1e-12);
        assert!(r.rnn_step_error < 1e-12);
        assert!(r.homomorphism_error < 1e-12);
    }
}
