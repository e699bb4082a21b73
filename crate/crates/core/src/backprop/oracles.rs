//! Independent routes to the chain gradients: the dense compact-WY formulas and
//! central finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::householder::{build_compact_wy, chain_matvec, ReflectionStack};

use super::GradientBundle;

/// Default step for [`finite_diff_grad`].
pub const FD_EPS: f64 = 1e-6;

/// Gradients from the closed-form WY expressions:
///
/// `dL/dU = U[(h~ C~') o B' + (C~ h~') o B] - (dL/dC) h~' - h C~'`,
/// `dL/dh = dL/dC - U C~`,
///
/// with `h~ = T^{-1} U' h` and `C~ = T'^{-1} U' dL/dC`. Only valid for `m < n`.
pub fn grad_formulas(
    stack: &ReflectionStack,
    h: &[f64],
    grad_c: &[f64],
) -> Result<GradientBundle> {
    grad_formulas_impl(stack, h, grad_c, false)
}

/// Same as [`grad_formulas`] but with the sign of the `h C~'` term flipped.
/// Exists so that gradient-check harnesses can prove they detect faults.
#[doc(hidden)]
pub fn grad_formulas_faulty(
    stack: &ReflectionStack,
    h: &[f64],
    grad_c: &[f64],
) -> Result<GradientBundle> {
    grad_formulas_impl(stack, h, grad_c, true)
}

fn grad_formulas_impl(
    stack: &ReflectionStack,
    h: &[f64],
    grad_c: &[f64],
    flip: bool,
) -> Result<GradientBundle> {
    if stack.has_sign() {
        return Err(Error::Unsupported(
            "closed-form gradients need m <= n - 1; use local_fpbp for m = n".into(),
        ));
    }
    let n = stack.n();
    if h.len() != n || grad_c.len() != n {
        return Err(Error::Shape(format!(
            "vectors must have length {n}, got {} and {}",
            h.len(),
            grad_c.len()
        )));
    }
    let u = stack.u();
    let wy = build_compact_wy(stack);
    let h = DVector::from_column_slice(h);
    let gc = DVector::from_column_slice(grad_c);

    let h_tilde = wy
        .t
        .solve_upper_triangular(&(u.transpose() * &h))
        .ok_or_else(|| Error::Numerical("T is singular".into()))?;
    let c_tilde = wy
        .t
        .tr_solve_upper_triangular(&(u.transpose() * &gc))
        .ok_or_else(|| Error::Numerical("T is singular".into()))?;

    let hc = &h_tilde * c_tilde.transpose();
    let ch = &c_tilde * h_tilde.transpose();
    let inner = hc.component_mul(&wy.b.transpose()) + ch.component_mul(&wy.b);
    let last = &h * c_tilde.transpose();
    let mut d_u = u * inner - &gc * h_tilde.transpose();
    if flip {
        d_u += last;
    } else {
        d_u -= last;
    }
    ReflectionStack::mask_structural(&mut d_u);
    let d_h = gc - u * &c_tilde;

    Ok(GradientBundle {
        d_u,
        d_sign: 0.0,
        d_h: d_h.as_slice().to_vec(),
        c_tilde: c_tilde.as_slice().to_vec(),
    })
}

/// Central differences of `L(U, h) = grad_c' W(U) h` over every structurally
/// nonzero entry of `U` and every entry of `h`. The sign factor is held fixed.
pub fn finite_diff_grad(
    stack: &ReflectionStack,
    h: &[f64],
    grad_c: &[f64],
    eps: f64,
) -> Result<GradientBundle> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    let n = stack.n();
    if h.len() != n || grad_c.len() != n {
        return Err(Error::Shape(format!("vectors must have length {n}")));
    }
    let loss = |s: &ReflectionStack, h: &[f64]| -> Result<f64> {
        let (c, _) = chain_matvec(s, h)?;
        Ok(c.iter().zip(grad_c).map(|(a, b)| a * b).sum())
    };

    let cols = stack.cols();
    let mut d_u = DMatrix::zeros(n, cols);
    for j in 0..cols {
        for i in j..n {
            let mut plus = stack.u().clone();
            plus[(i, j)] += eps;
            let mut minus = stack.u().clone();
            minus[(i, j)] -= eps;
            let sp = ReflectionStack::new(n, stack.m(), plus, stack.sign())?;
            let sm = ReflectionStack::new(n, stack.m(), minus, stack.sign())?;
            d_u[(i, j)] = (loss(&sp, h)? - loss(&sm, h)?) / (2.0 * eps);
        }
    }

    let mut d_h = vec![0.0; n];
    let mut hp = h.to_vec();
    for i in 0..n {
        hp[i] = h[i] + eps;
        let lp = loss(stack, &hp)?;
        hp[i] = h[i] - eps;
        let lm = loss(stack, &hp)?;
        hp[i] = h[i];
        d_h[i] = (lp - lm) / (2.0 * eps);
    }

    Ok(GradientBundle {
        d_u,
        d_sign: 0.0,
        d_h,
        c_tilde: Vec::new(),
    })
}

/// Largest absolute entry difference over `dU` and `dh`, divided by the
/// largest absolute entry of `reference` (floored at `1e-300`).
pub fn relative_error(candidate: &GradientBundle, reference: &GradientBundle) -> f64 {
    let diff_u = (&candidate.d_u - &reference.d_u).amax();
    let diff_h = candidate
        .d_h
        .iter()
        .zip(&reference.d_h)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale_u = reference.d_u.amax();
    let scale_h = reference.d_h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff_u.max(diff_h) / scale_u.max(scale_h).max(1e-300)
}
