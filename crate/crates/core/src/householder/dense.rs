use nalgebra::DMatrix;

use super::ReflectionStack;

/// Dense `W`, accumulated as `I * H_n * ... * H_{n-m+1} * H_1` with explicit
/// rank-one updates (independent of the chain kernel).
pub fn materialize(stack: &ReflectionStack) -> DMatrix<f64> {
    let n = stack.n();
    let mut w = DMatrix::<f64>::identity(n, n);
    for j in 0..stack.cols() {
        let u = stack.column(j);
        let norm_sq: f64 = u.iter().map(|v| v * v).sum();
        // W <- W - (2 / |u|^2) (W u) u'
        for r in 0..n {
            let wu: f64 = (0..n).map(|c| w[(r, c)] * u[c]).sum();
            let scale = 2.0 * wu / norm_sq;
            for c in j..n {
                w[(r, c)] -= scale * u[c];
            }
        }
    }
    if stack.has_sign() && stack.sign() < 0.0 {
        let mut last = w.column_mut(n - 1);
        last.neg_mut();
    }
    w
}

/// Dense Householder matrix `I - 2 u u' / |u|^2` for a full-length vector.
pub fn householder_matrix(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let norm_sq: f64 = u.iter().map(|v| v * v).sum();
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - 2.0 * u[i] * u[j] / norm_sq
    })
}

/// Frobenius norm of `M' M - I`.
pub fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "orthogonality_error needs a square matrix");
    let n = m.nrows();
    let gram = m.transpose() * m;
    (gram - DMatrix::<f64>::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_vector_gives_signed_identity() {
        let s = ReflectionStack::from_vectors(3, &[vec![0.0, 0.0, 1.0]], None).unwrap();
        let w = materialize(&s);
        assert_eq!(w, DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, -1.0]));
    }

    #[test]
    fn sign_factor_cancels_reflection() {
        let s = ReflectionStack::from_vectors(2, &[vec![0.0, 1.0]], Some(-1.0)).unwrap();
        assert_eq!(materialize(&s), DMatrix::identity(2, 2));
    }

    #[test]
    fn random_stacks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, m) in &[(8, 3), (8, 8), (20, 19)] {
            let s = ReflectionStack::random(n, m, &mut rng).unwrap();
            let w = materialize(&s);
            assert!(orthogonality_error(&w) < 1e-12);
            let det = w.clone().determinant();
            assert!((det.abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_product_of_dense_reflections() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ReflectionStack::random(6, 4, &mut rng).unwrap();
        let mut prod = DMatrix::identity(6, 6);
        for j in 0..s.cols() {
            prod *= householder_matrix(s.column(j));
        }
        assert!((materialize(&s) - prod).norm() < 1e-13);
    }

    #[test]
    fn orthogonality_error_values() {
        assert_eq!(orthogonality_error(&DMatrix::identity(4, 4)), 0.0);
        let (c, s) = (0.83_f64.cos(), 0.83_f64.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(orthogonality_error(&rot) < 1e-15);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(orthogonality_error(&d), 3.0);
    }
}
