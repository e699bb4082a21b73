use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::ReflectionStack;

/// Compact WY form of the reflection product: `W = I - U T^{-1} U'`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactWY {
    /// `striu(U'U) + diag(U'U) / 2`
    pub t: DMatrix<f64>,
    /// `striu(J) + I / 2`
    pub b: DMatrix<f64>,
}

/// The constant mask `striu(J) + I/2` of size `m`.
pub fn wy_mask(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Greater => 0.0,
    })
}

/// Builds `T` and `B` from the stored reflection columns. For `m == n` the
/// sign factor is not folded in; [`wy_matvec`] applies it separately.
pub fn build_compact_wy(stack: &ReflectionStack) -> CompactWY {
    let u = stack.u();
    let gram = u.transpose() * u;
    let b = wy_mask(stack.cols());
    CompactWY {
        t: gram.component_mul(&b),
        b,
    }
}

/// `(I - U T^{-1} U') H_1 h`.
pub fn wy_matvec(stack: &ReflectionStack, wy: &CompactWY, h: &[f64]) -> Result<Vec<f64>> {
    let n = stack.n();
    if h.len() != n {
        return Err(Error::Shape(format!(
            "vector has length {}, expected {n}",
            h.len()
        )));
    }
    if wy.t.nrows() != stack.cols() {
        return Err(Error::Shape("WY factors do not match the stack".into()));
    }
    let mut x = DVector::from_column_slice(h);
    stack.apply_sign(x.as_mut_slice());
    let rhs = stack.u().transpose() * &x;
    let z = wy
        .t
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular factor T is singular".into()))?;
    Ok((x - stack.u() * z).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::householder::{chain_matvec, materialize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_give_half_identity() {
        let s = ReflectionStack::from_vectors(3, &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0]], None)
            .unwrap();
        let wy = build_compact_wy(&s);
        assert_eq!(wy.t, DMatrix::identity(2, 2) * 0.5);
        let out = wy_matvec(&s, &wy, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(out, vec![1.0, -1.0, -1.0]);
    }

    #[test]
    fn single_column() {
        let s = ReflectionStack::from_vectors(3, &[vec![1.0, 2.0, 2.0]], None).unwrap();
        let wy = build_compact_wy(&s);
        assert_eq!(wy.t, DMatrix::from_element(1, 1, 4.5));
    }

    #[test]
    fn zero_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = ReflectionStack::random(6, 3, &mut rng).unwrap();
        let wy = build_compact_wy(&s);
        assert_eq!(wy_matvec(&s, &wy, &[0.0; 6]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn identity_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = ReflectionStack::random(8, 5, &mut rng).unwrap();
        let wy = build_compact_wy(&s);
        let t_inv = wy.t.clone().try_inverse().unwrap();
        let dense = DMatrix::identity(8, 8) - s.u() * t_inv * s.u().transpose();
        assert!((dense - materialize(&s)).norm() < 1e-12);
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(wy.t[(i, j)], 0.0);
            }
            let half_norm = 0.5 * s.tail(i).iter().map(|v| v * v).sum::<f64>();
            assert!((wy.t[(i, i)] - half_norm).abs() < 1e-15);
        }
    }

    #[test]
    fn agrees_with_chain_including_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(n, m) in &[(32, 16), (7, 7), (12, 11)] {
            let s = ReflectionStack::random(n, m, &mut rng).unwrap();
            let wy = build_compact_wy(&s);
            let h: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let a = wy_matvec(&s, &wy, &h).unwrap();
            let (b, _) = chain_matvec(&s, &h).unwrap();
            for i in 0..n {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_structure() {
        let b = wy_mask(3);
        assert_eq!(
            b,
            DMatrix::from_row_slice(3, 3, &[0.5, 1.0, 1.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.5])
        );
    }
}
