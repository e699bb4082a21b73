use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{materialize, orthogonality_error, ReflectionStack};

/// Relative tolerance for treating a column as already aligned with `e1`.
pub const ALIGNED_TOL: f64 = 1e-12;
/// A column norm at or below `RANK_TOL * |A|_F` is reported as rank deficiency.
pub const RANK_TOL: f64 = 1e-13;

/// QR decomposition `A = W R` with `W` expressed as a full reflection stack
/// (`m = n`, including the sign factor) and `R` upper triangular with a
/// strictly positive diagonal.
pub fn qr_decompose(a: &DMatrix<f64>) -> Result<(ReflectionStack, DMatrix<f64>)> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::Shape(format!(
            "QR needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let scale = a.norm();
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::Decomposition { column: 0 });
    }
    let mut r = a.clone();
    let mut u = DMatrix::zeros(n, n - 1);

    for k in 0..n - 1 {
        let len = n - k;
        let col: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * scale {
            return Err(Error::Decomposition { column: k });
        }
        let mut v = vec![0.0; len];
        if norm - r[(k, k)] < ALIGNED_TOL * norm {
            v[len - 1] = 1.0;
        } else {
            v.copy_from_slice(&col);
            v[0] -= norm;
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
        }
        let v_sq: f64 = v.iter().map(|x| x * x).sum();
        // R <- H R on rows k..n
        for c in 0..n {
            let dot: f64 = (0..len).map(|i| v[i] * r[(k + i, c)]).sum();
            let coeff = 2.0 * dot / v_sq;
            for i in 0..len {
                r[(k + i, c)] -= coeff * v[i];
            }
        }
        u.column_mut(k).rows_mut(k, len).copy_from_slice(&v);
        // Entries below the pivot are zero in exact arithmetic.
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
    }

    let last = r[(n - 1, n - 1)];
    if last.abs() <= RANK_TOL * scale {
        return Err(Error::Decomposition { column: n - 1 });
    }
    let sign = if last > 0.0 { 1.0 } else { -1.0 };
    if sign < 0.0 {
        r.row_mut(n - 1).neg_mut();
    }
    let stack = ReflectionStack::new(n, n, u, sign)?;
    Ok((stack, r))
}

/// Recovers the reflection stack that materialises to the orthogonal `q`.
pub fn decompose_orthogonal(q: &DMatrix<f64>) -> Result<ReflectionStack> {
    if !q.is_square() {
        return Err(Error::Shape("expected a square matrix".into()));
    }
    let err = orthogonality_error(q);
    if !(err < 1e-8) {
        return Err(Error::Precondition(format!(
            "matrix is not orthogonal (|Q'Q - I|_F = {err:e})"
        )));
    }
    let (stack, r) = qr_decompose(q)?;
    let n = q.nrows();
    let dev = (r - DMatrix::<f64>::identity(n, n)).amax();
    if dev > 1e-8 {
        return Err(Error::Consistency(format!(
            "R factor of an orthogonal matrix deviates from I by {dev:e}"
        )));
    }
    Ok(stack)
}

/// Relative reconstruction residual `|W R - A|_F / |A|_F`.
pub fn qr_residual(a: &DMatrix<f64>, stack: &ReflectionStack, r: &DMatrix<f64>) -> f64 {
    (materialize(stack) * r - a).norm() / a.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identity_decomposes_to_identity() {
        let a = DMatrix::identity(5, 5);
        let (s, r) = qr_decompose(&a).unwrap();
        assert_eq!(r, a);
        assert!((materialize(&s) - &a).norm() < 1e-15);
    }

    #[test]
    fn reflection_diag_recovers_sign() {
        for n in [2usize, 3, 4, 5] {
            let mut a = DMatrix::identity(n, n);
            a[(n - 1, n - 1)] = -1.0;
            let (s, r) = qr_decompose(&a).unwrap();
            assert_eq!(r, DMatrix::identity(n, n), "n={n}");
            assert!((materialize(&s) - &a).norm() < 1e-15);
            // every pivot takes the aligned branch, each flipping the last row once
            let expected = if n % 2 == 1 { -1.0 } else { 1.0 };
            assert_eq!(s.sign(), expected, "n={n}");
        }
    }

    #[test]
    fn random_gaussian_reconstructs() {
        for seed in 0..5 {
            let a = gaussian(8, seed);
            let (s, r) = qr_decompose(&a).unwrap();
            assert!(qr_residual(&a, &s, &r) < 1e-10);
            for i in 0..8 {
                assert!(r[(i, i)] > 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
            assert!(orthogonality_error(&materialize(&s)) < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_names_column() {
        let mut a = gaussian(4, 3);
        for i in 0..4 {
            a[(i, 2)] = a[(i, 0)] * 2.0 - a[(i, 1)];
        }
        match qr_decompose(&a) {
            Err(Error::Decomposition { column }) => assert_eq!(column, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            qr_decompose(&DMatrix::zeros(3, 3)),
            Err(Error::Decomposition { column: 0 })
        ));
    }

    #[test]
    fn rotation_round_trips() {
        let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let stack = decompose_orthogonal(&q).unwrap();
        assert!((materialize(&stack) - q).norm() < 1e-12);
    }

    #[test]
    fn non_orthogonal_is_rejected() {
        let a = gaussian(4, 9);
        assert!(matches!(
            decompose_orthogonal(&a),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn one_by_one() {
        let (s, r) = qr_decompose(&DMatrix::from_element(1, 1, -3.0)).unwrap();
        assert_eq!(s.sign(), -1.0);
        assert_eq!(r[(0, 0)], 3.0);
    }
}
