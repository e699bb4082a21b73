use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flops::{FlopSink, NoFlops};

use super::ReflectionStack;

/// Intermediates of one forward pass through the reflection chain.
///
/// `h` is column-major `n x (cols + 1)`: column `cols` is the input (after the
/// sign factor when `m == n`), column `0` is the output `W h`, and
/// `h[:, k] = h[:, k + 1] - h_tilde[k] * U[:, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    n: usize,
    h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub norms: Arc<[f64]>,
}

impl ForwardTape {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.h_tilde.len()
    }

    /// Column `k` of the H matrix.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.h[k * self.n..(k + 1) * self.n]
    }

    pub fn output(&self) -> &[f64] {
        self.column(0)
    }

    pub fn input(&self) -> &[f64] {
        self.column(self.cols())
    }

    /// Memory held by the H matrix, in f64 values.
    pub fn stored_values(&self) -> usize {
        self.h.len()
    }
}

/// Squared norms shared across timesteps, validated once per forward pass.
pub fn shared_norms(stack: &ReflectionStack) -> Result<Arc<[f64]>> {
    Ok(stack.squared_norms()?.into())
}

/// `C = W h` through the reflection chain, keeping the tape for back-propagation.
pub fn chain_matvec(stack: &ReflectionStack, h: &[f64]) -> Result<(Vec<f64>, ForwardTape)> {
    let norms = shared_norms(stack)?;
    let tape = forward(stack, &norms, h, &mut NoFlops)?;
    Ok((tape.output().to_vec(), tape))
}

/// Local forward propagation with precomputed squared norms.
///
/// Flops per reflection column `k` (1-based): `2(n - k) + 3` for the
/// coefficient and `2n` for the column update.
pub fn forward<F: FlopSink>(
    stack: &ReflectionStack,
    norms: &Arc<[f64]>,
    h: &[f64],
    flops: &mut F,
) -> Result<ForwardTape> {
    let n = stack.n();
    let cols = stack.cols();
    if h.len() != n {
        return Err(Error::Shape(format!(
            "hidden state has length {}, expected {n}",
            h.len()
        )));
    }
    if norms.len() != cols {
        return Err(Error::Shape(format!(
            "{} squared norms supplied for {cols} reflections",
            norms.len()
        )));
    }
    let mut big_h = vec![0.0; n * (cols + 1)];
    let input = &mut big_h[cols * n..];
    input.copy_from_slice(h);
    stack.apply_sign(input);

    let mut h_tilde = vec![0.0; cols];
    for k in (0..cols).rev() {
        let (lower, upper) = big_h.split_at_mut((k + 1) * n);
        let next = &upper[..n];
        let cur = &mut lower[k * n..];
        let u = stack.column(k);

        let mut dot = u[k] * next[k];
        for i in k + 1..n {
            dot += u[i] * next[i];
        }
        let coeff = 2.0 / norms[k] * dot;
        flops.record(2 * (n - k) as u64 + 1);
        h_tilde[k] = coeff;

        for i in 0..n {
            cur[i] = next[i] - coeff * u[i];
        }
        flops.record(2 * n as u64);
    }
    Ok(ForwardTape {
        n,
        h: big_h,
        h_tilde,
        norms: Arc::clone(norms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::FlopCounter;
    use crate::householder::materialize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_basis_reflection_negates_last() {
        let s = ReflectionStack::from_vectors(4, &[vec![0.0, 0.0, 0.0, 1.0]], None).unwrap();
        let (c, _) = chain_matvec(&s, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c, vec![1.0, 2.0, 3.0, -4.0]);
    }

    #[test]
    fn two_reflection_hand_product() {
        let s = ReflectionStack::from_vectors(3, &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0]], None)
            .unwrap();
        let (c, _) = chain_matvec(&s, &[0.5, -2.0, 7.0]).unwrap();
        assert_eq!(c, vec![0.5, 2.0, -7.0]);
    }

    #[test]
    fn tape_columns_follow_update_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ReflectionStack::random(9, 5, &mut rng).unwrap();
        let h: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let (_, tape) = chain_matvec(&s, &h).unwrap();
        let norm0: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..tape.cols() {
            let u = s.column(k);
            for i in 0..9 {
                let expect = tape.column(k + 1)[i] - tape.h_tilde[k] * u[i];
                assert_eq!(tape.column(k)[i], expect);
            }
            let nk: f64 = tape.column(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nk - norm0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_materialisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, m) in &[(16, 8), (16, 16), (5, 1), (2, 2)] {
            let s = ReflectionStack::random(n, m, &mut rng).unwrap();
            let w = materialize(&s);
            let h: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).cos()).collect();
            let (c, _) = chain_matvec(&s, &h).unwrap();
            let dense = &w * nalgebra::DVector::from_column_slice(&h);
            for i in 0..n {
                assert!((c[i] - dense[i]).abs() < 1e-12, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn forward_flops_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = ReflectionStack::random(128, 16, &mut rng).unwrap();
        let norms = shared_norms(&s).unwrap();
        let mut counter = FlopCounter::default();
        forward(&s, &norms, &vec![1.0; 128], &mut counter).unwrap();
        assert_eq!(counter.get(), 7968);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = ReflectionStack::random(4, 2, &mut rng).unwrap();
        assert!(matches!(chain_matvec(&s, &[1.0; 3]), Err(Error::Shape(_))));
    }
}
