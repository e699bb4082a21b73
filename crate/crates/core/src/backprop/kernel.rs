use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::flops::{FlopSink, NoFlops};
use crate::householder::{forward, shared_norms, ForwardTape, ReflectionStack};

/// Gradients of one chain step `C = W h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `dL/dU`, same shape as the stored parameter matrix, structural zeros exact.
    pub d_u: DMatrix<f64>,
    /// Always zero: the sign factor is snapped, not trained.
    pub d_sign: f64,
    /// `dL/dh` for the input hidden state.
    pub d_h: Vec<f64>,
    pub c_tilde: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros(n: usize, cols: usize) -> Self {
        Self {
            d_u: DMatrix::zeros(n, cols),
            d_sign: 0.0,
            d_h: vec![0.0; n],
            c_tilde: vec![0.0; cols],
        }
    }
}

/// Local back-propagation through the chain given the forward tape.
///
/// Writes the unmasked column gradients into `d_u`, accumulating. Returns the
/// running vector `g` (before the sign factor) and `C~`.
///
/// Flops per column `k` (1-based): `2(n - k) + 3` for `C~_k`, `2(n - k + 1)`
/// for the `g` update and `3n` for the gradient column.
pub(crate) fn backward_into<F: FlopSink>(
    stack: &ReflectionStack,
    tape: &ForwardTape,
    grad_c: &[f64],
    d_u: &mut DMatrix<f64>,
    flops: &mut F,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = stack.n();
    let cols = stack.cols();
    if grad_c.len() != n {
        return Err(Error::Shape(format!(
            "dL/dC has length {}, expected {n}",
            grad_c.len()
        )));
    }
    if tape.n() != n || tape.cols() != cols {
        return Err(Error::Shape("forward tape does not match the stack".into()));
    }
    let norms = &tape.norms;
    let mut g = grad_c.to_vec();
    let mut c_tilde = vec![0.0; cols];
    let d_u = d_u.as_mut_slice();
    for k in 0..cols {
        let u = stack.column(k);
        let mut dot = u[k] * g[k];
        for i in k + 1..n {
            dot += u[i] * g[i];
        }
        let ck = 2.0 / norms[k] * dot;
        flops.record(2 * (n - k) as u64 + 1);
        c_tilde[k] = ck;

        for i in k..n {
            g[i] -= ck * u[i];
        }
        flops.record(2 * (n - k) as u64);

        let hk = tape.h_tilde[k];
        let next = tape.column(k + 1);
        let out = &mut d_u[k * n..(k + 1) * n];
        for i in 0..n {
            out[i] += -(hk * g[i]) - ck * next[i];
        }
        flops.record(3 * n as u64);
    }
    Ok((g, c_tilde))
}

/// Back-propagation for one step from a stored tape. `dL/dU` is masked.
pub fn backward<F: FlopSink>(
    stack: &ReflectionStack,
    tape: &ForwardTape,
    grad_c: &[f64],
    flops: &mut F,
) -> Result<GradientBundle> {
    let mut d_u = DMatrix::zeros(stack.n(), stack.cols());
    let (mut g, c_tilde) = backward_into(stack, tape, grad_c, &mut d_u, flops)?;
    ReflectionStack::mask_structural(&mut d_u);
    stack.apply_sign(&mut g);
    Ok(GradientBundle {
        d_u,
        d_sign: 0.0,
        d_h: g,
        c_tilde,
    })
}

/// Fused forward and backward step through the chain: returns `C = W h_prev`,
/// the gradients for `dL/dC = grad_c`, and the forward tape.
pub fn local_fpbp(
    stack: &ReflectionStack,
    h_prev: &[f64],
    grad_c: &[f64],
) -> Result<(Vec<f64>, GradientBundle, ForwardTape)> {
    let norms = shared_norms(stack)?;
    local_fpbp_with(stack, &norms, h_prev, grad_c, &mut NoFlops, &mut NoFlops)
}

/// [`local_fpbp`] with precomputed norms and separate flop sinks per phase.
pub fn local_fpbp_with<F: FlopSink, B: FlopSink>(
    stack: &ReflectionStack,
    norms: &Arc<[f64]>,
    h_prev: &[f64],
    grad_c: &[f64],
    fp_flops: &mut F,
    bp_flops: &mut B,
) -> Result<(Vec<f64>, GradientBundle, ForwardTape)> {
    let tape = forward(stack, norms, h_prev, fp_flops)?;
    let grads = backward(stack, &tape, grad_c, bp_flops)?;
    Ok((tape.output().to_vec(), grads, tape))
}

/// Raw outputs of the fused step on a bare parameter matrix, with no sign
/// factor and no masking: `(C, g, G)`.
///
/// This mirrors the plain array reference implementation and is what the
/// interchange test vectors record.
pub fn fused_step_unmasked(
    u: &DMatrix<f64>,
    h_prev: &[f64],
    grad_c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = u.nrows();
    let m = u.ncols();
    if m >= n {
        return Err(Error::Shape(format!(
            "bare parameter matrix must have fewer columns than rows, got {n}x{m}"
        )));
    }
    let stack = ReflectionStack::new(n, m, u.clone(), 1.0)?;
    let norms = shared_norms(&stack)?;
    let tape = forward(&stack, &norms, h_prev, &mut NoFlops)?;
    let mut big_g = DMatrix::zeros(n, m);
    let (g, _) = backward_into(&stack, &tape, grad_c, &mut big_g, &mut NoFlops)?;
    Ok((tape.output().to_vec(), g, big_g))
}

/// Back-propagation that regenerates the tape from `h_prev` instead of
/// reading a stored one. The forward work is charged to `flops` as well.
pub fn backward_recompute<F: FlopSink>(
    stack: &ReflectionStack,
    norms: &Arc<[f64]>,
    h_prev: &[f64],
    grad_c: &[f64],
    flops: &mut F,
) -> Result<GradientBundle> {
    let tape = forward(stack, norms, h_prev, flops)?;
    backward(stack, &tape, grad_c, flops)
}

/// [`backward_into`] on a tape regenerated from `h_prev`. Returns `g`.
pub(crate) fn backward_recompute_into<F: FlopSink>(
    stack: &ReflectionStack,
    norms: &Arc<[f64]>,
    h_prev: &[f64],
    grad_c: &[f64],
    d_u: &mut DMatrix<f64>,
    flops: &mut F,
) -> Result<Vec<f64>> {
    let tape = forward(stack, norms, h_prev, flops)?;
    Ok(backward_into(stack, &tape, grad_c, d_u, flops)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::{closed_form, FlopCounter};
    use crate::householder::{chain_matvec, materialize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ReflectionStack::random(10, 4, &mut rng).unwrap();
        let h = rand_vec(&mut rng, 10);
        let (c, grads, _) = local_fpbp(&s, &h, &[0.0; 10]).unwrap();
        assert_eq!(c, chain_matvec(&s, &h).unwrap().0);
        assert!(grads.d_u.iter().all(|&v| v == 0.0));
        assert!(grads.d_h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_state_gives_transpose_and_no_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [3, 7, 8] {
            let s = ReflectionStack::random(8, m, &mut rng).unwrap();
            let gc = rand_vec(&mut rng, 8);
            let (c, grads, tape) = local_fpbp(&s, &[0.0; 8], &gc).unwrap();
            assert!(c.iter().all(|&v| v == 0.0));
            assert!(tape.h_tilde.iter().all(|&v| v == 0.0));
            assert!(grads.d_u.iter().all(|&v| v == 0.0));
            let wt = materialize(&s).transpose() * nalgebra::DVector::from_vec(gc);
            for i in 0..8 {
                assert!((grads.d_h[i] - wt[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn structural_entries_are_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ReflectionStack::random(12, 12, &mut rng).unwrap();
        let (_, grads, _) =
            local_fpbp(&s, &rand_vec(&mut rng, 12), &rand_vec(&mut rng, 12)).unwrap();
        for j in 0..grads.d_u.ncols() {
            for i in 0..j {
                assert_eq!(grads.d_u[(i, j)].to_bits(), 0.0f64.to_bits());
            }
        }
        assert_eq!(grads.d_sign, 0.0);
    }

    #[test]
    fn stored_and_recomputed_backward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = ReflectionStack::random(16, 9, &mut rng).unwrap();
        let norms = shared_norms(&s).unwrap();
        let h = rand_vec(&mut rng, 16);
        let gc = rand_vec(&mut rng, 16);
        let tape = forward(&s, &norms, &h, &mut NoFlops).unwrap();
        let a = backward(&s, &tape, &gc, &mut NoFlops).unwrap();
        let b = backward_recompute(&s, &norms, &h, &gc, &mut NoFlops).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flop_counts_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, m) in &[(128usize, 16usize), (16, 15), (17, 1), (64, 40)] {
            let s = ReflectionStack::random(n, m, &mut rng).unwrap();
            let norms = shared_norms(&s).unwrap();
            let h = rand_vec(&mut rng, n);
            let gc = rand_vec(&mut rng, n);
            let (mut fp, mut bp) = (FlopCounter::default(), FlopCounter::default());
            local_fpbp_with(&s, &norms, &h, &gc, &mut fp, &mut bp).unwrap();
            let (n, m) = (n as u64, m as u64);
            assert_eq!(fp.get(), closed_form::forward(n, m));
            assert_eq!(bp.get(), closed_form::backward_stored(n, m));
            let mut rc = FlopCounter::default();
            backward_recompute(&s, &norms, &h, &gc, &mut rc).unwrap();
            assert_eq!(rc.get(), closed_form::backward_recompute(n, m));
        }
    }

    #[test]
    fn running_vector_is_hidden_gradient() {
        // g after the loop equals dL/dC - U C~
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = ReflectionStack::random(9, 6, &mut rng).unwrap();
        let h = rand_vec(&mut rng, 9);
        let gc = rand_vec(&mut rng, 9);
        let (_, grads, _) = local_fpbp(&s, &h, &gc).unwrap();
        let uc = s.u() * nalgebra::DVector::from_column_slice(&grads.c_tilde);
        for i in 0..9 {
            assert!((grads.d_h[i] - (gc[i] - uc[i])).abs() < 1e-13);
        }
    }
}
