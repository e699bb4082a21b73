use crate::error::{Error, Result};
use crate::householder::{ReflectionStack, EPS_MIN};

use super::{ModelGrads, OrnnParams, TENSOR_NAMES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            step: 0,
            m: shapes.iter().map(|&len| vec![0.0; len]).collect(),
            v: shapes.iter().map(|&len| vec![0.0; len]).collect(),
        }
    }

    pub fn for_params(params: &OrnnParams) -> Self {
        let lens: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(&lens)
    }
}

/// One bias-corrected Adam update over matching tensors.
pub fn adam_update(
    tensors: &mut [&mut [f64]],
    grads: &[&[f64]],
    names: &[&str],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if tensors.len() != grads.len() || tensors.len() != state.m.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for (i, (t, g)) in tensors.iter().zip(grads).enumerate() {
        if t.len() != g.len() || t.len() != state.m[i].len() {
            return Err(Error::Shape(format!(
                "tensor `{}` has {} entries, gradient {}, state {}",
                names.get(i).copied().unwrap_or("?"),
                t.len(),
                g.len(),
                state.m[i].len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                tensor: names.get(i).copied().unwrap_or("?").to_string(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (i, (tensor, grad)) in tensors.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..tensor.len() {
            let g = grad[j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            tensor[j] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Adam step over all model tensors followed by [`project_constraints`].
pub fn adam_step(
    params: &mut OrnnParams,
    grads: &ModelGrads,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    let g = grads.tensors();
    adam_update(&mut params.tensors_mut(), &g, &TENSOR_NAMES, state, config)?;
    project_constraints(params)
}

/// `-1` if `x <= 0`, else `+1`.
pub fn snap_sign(x: f64) -> f64 {
    if x <= 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Restores the structural zeros of `U`, snaps the sign factor and checks every
/// reflection vector is still usable.
pub fn project_constraints(params: &mut OrnnParams) -> Result<()> {
    let sign = params.stack.sign();
    project_stack(&mut params.stack, sign)
}

/// Same as [`project_constraints`] for a bare stack whose sign factor has been
/// set to the raw value `raw_sign` (for instance after an unconstrained update).
pub fn project_stack(stack: &mut ReflectionStack, raw_sign: f64) -> Result<()> {
    ReflectionStack::mask_structural(stack.u_mut());
    stack.set_sign_raw(if stack.has_sign() { snap_sign(raw_sign) } else { 1.0 });
    for j in 0..stack.cols() {
        let norm_sq: f64 = stack.tail(j).iter().map(|v| v * v).sum();
        if !(norm_sq >= EPS_MIN && norm_sq.is_finite()) {
            return Err(Error::DegenerateParameter { column: j, norm_sq });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::householder::{materialize, orthogonality_error};
    use crate::model::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_by_lr() {
        let mut x = vec![1.0];
        let mut state = AdamState::new(&[1]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        adam_update(&mut [&mut x], &[&[1.0]], &["x"], &mut state, &cfg).unwrap();
        assert!((x[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut x = vec![0.3, -2.0];
        let mut state = AdamState::new(&[2]);
        adam_update(&mut [&mut x], &[&[0.0, 0.0]], &["x"], &mut state, &AdamConfig::default())
            .unwrap();
        assert_eq!(x, vec![0.3, -2.0]);
    }

    #[test]
    fn minimises_a_parabola() {
        let mut x = vec![1.0];
        let mut state = AdamState::new(&[1]);
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        for _ in 0..500 {
            let g = 2.0 * x[0];
            adam_update(&mut [&mut x], &[&[g]], &["x"], &mut state, &cfg).unwrap();
        }
        assert!(x[0] * x[0] < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut x = vec![1.0];
        let mut y = vec![1.0];
        let mut state = AdamState::new(&[1, 1]);
        let err = adam_update(
            &mut [&mut x, &mut y],
            &[&[0.0], &[f64::NAN]],
            &["x", "why"],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { tensor } if tensor == "why"));
    }

    #[test]
    fn sign_snapping_rule() {
        assert_eq!(snap_sign(0.3), 1.0);
        assert_eq!(snap_sign(0.0), -1.0);
        assert_eq!(snap_sign(-0.7), -1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ReflectionStack::random(4, 4, &mut rng).unwrap();
        project_stack(&mut s, 0.3).unwrap();
        assert_eq!(s.sign(), 1.0);
        project_stack(&mut s, 0.0).unwrap();
        assert_eq!(s.sign(), -1.0);
    }

    #[test]
    fn projection_is_idempotent_and_keeps_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = OrnnParams::init(10, 10, 2, 1, Activation::LeakyRelu, &mut rng).unwrap();
        let before = p.clone();
        project_constraints(&mut p).unwrap();
        assert_eq!(p, before);

        let mut state = AdamState::for_params(&p);
        let cfg = AdamConfig {
            lr: 0.05,
            ..Default::default()
        };
        for _ in 0..100 {
            let mut g = ModelGrads::zeros_like(&p);
            for v in g.d_u.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            adam_step(&mut p, &g, &mut state, &cfg).unwrap();
        }
        for j in 0..p.stack.cols() {
            for i in 0..j {
                assert_eq!(p.stack.u()[(i, j)], 0.0);
            }
        }
        assert!(orthogonality_error(&materialize(&p.stack)) < 1e-12);
    }

    #[test]
    fn collapsed_vector_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ReflectionStack::random(5, 2, &mut rng).unwrap();
        s.u_mut().column_mut(1).fill(0.0);
        assert!(matches!(
            project_stack(&mut s, 1.0),
            Err(Error::DegenerateParameter { column: 1, .. })
        ));
    }
}
