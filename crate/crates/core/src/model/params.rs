use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::householder::{chain_matvec, ReflectionStack};

use super::Activation;

/// Parameters of the orthogonal RNN:
/// `h_t = phi(W h_{t-1} + V x_t + b)`, `o_t = Y h_t + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrnnParams {
    pub stack: ReflectionStack,
    /// `n x n_x`
    pub v: DMatrix<f64>,
    /// `n_o x n`
    pub y: DMatrix<f64>,
    /// Additive hidden bias, or the modReLU bias (length `n / 2`) for
    /// [`Activation::ModReluReal`].
    pub hidden_bias: Vec<f64>,
    pub output_bias: Vec<f64>,
    pub activation: Activation,
}

/// Names of the trainable tensors, in the order used everywhere.
pub const TENSOR_NAMES: [&str; 5] = ["U", "V", "Y", "hidden_bias", "output_bias"];

impl OrnnParams {
    /// Reflection entries ~ Uniform(-1, 1); `V`, `Y` ~ Uniform(-s, s) with
    /// `s = sqrt(6 / (fan_in + fan_out))`; biases zero; sign +-1.
    pub fn init<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        n_x: usize,
        n_o: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if activation == Activation::ModReluReal && !n.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "modrelu-real needs an even hidden size, got {n}"
            )));
        }
        let stack = ReflectionStack::random(n, m, rng)?;
        let sv = (6.0 / (n_x + n) as f64).sqrt();
        let v = DMatrix::from_fn(n, n_x, |_, _| rng.random_range(-sv..sv));
        let sy = (6.0 / (n + n_o) as f64).sqrt();
        let y = DMatrix::from_fn(n_o, n, |_, _| rng.random_range(-sy..sy));
        Ok(Self {
            stack,
            v,
            y,
            hidden_bias: vec![0.0; activation.bias_len(n)],
            output_bias: vec![0.0; n_o],
            activation,
        })
    }

    pub fn n(&self) -> usize {
        self.stack.n()
    }

    pub fn n_x(&self) -> usize {
        self.v.ncols()
    }

    pub fn n_o(&self) -> usize {
        self.y.nrows()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.n();
        if self.v.nrows() != n
            || self.y.ncols() != n
            || self.hidden_bias.len() != self.activation.bias_len(n)
            || self.output_bias.len() != self.y.nrows()
            || (self.activation == Activation::ModReluReal && !n.is_multiple_of(2))
        {
            return Err(Error::Shape(format!(
                "inconsistent parameters: n = {n}, V {}x{}, Y {}x{}, |b| = {}, |c| = {}",
                self.v.nrows(),
                self.v.ncols(),
                self.y.nrows(),
                self.y.ncols(),
                self.hidden_bias.len(),
                self.output_bias.len()
            )));
        }
        Ok(())
    }

    /// Trainable tensors as flat slices, ordered as [`TENSOR_NAMES`].
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.stack.u().as_slice(),
            self.v.as_slice(),
            self.y.as_slice(),
            &self.hidden_bias,
            &self.output_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.stack.u_mut().as_mut_slice(),
            self.v.as_mut_slice(),
            self.y.as_mut_slice(),
            &mut self.hidden_bias,
            &mut self.output_bias,
        ]
    }

    /// Adds `V x + b` (the additive bias only for non-modReLU activations).
    pub(crate) fn input_drive(&self, pre: &mut [f64], x: &[f64]) {
        let n = self.n();
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let col = &self.v.as_slice()[k * n..(k + 1) * n];
                for (p, &vk) in pre.iter_mut().zip(col) {
                    *p += vk * xk;
                }
            }
        }
        if self.activation != Activation::ModReluReal {
            for (p, b) in pre.iter_mut().zip(&self.hidden_bias) {
                *p += b;
            }
        }
    }

    /// `o = Y h + c`.
    pub fn output(&self, h: &[f64]) -> Vec<f64> {
        let mut o = self.output_bias.clone();
        let n_o = self.n_o();
        for (k, &hk) in h.iter().enumerate() {
            let col = &self.y.as_slice()[k * n_o..(k + 1) * n_o];
            for (oi, &yk) in o.iter_mut().zip(col) {
                *oi += yk * hk;
            }
        }
        o
    }
}

/// One recurrent step. Returns `(h_t, pre_t)`.
pub fn cell_forward(params: &OrnnParams, h_prev: &[f64], x_t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check_shapes()?;
    if x_t.len() != params.n_x() {
        return Err(Error::Shape(format!(
            "input has length {}, expected {}",
            x_t.len(),
            params.n_x()
        )));
    }
    let (mut pre, _) = chain_matvec(&params.stack, h_prev)?;
    params.input_drive(&mut pre, x_t);
    let h = params.activation.apply(&pre, &params.hidden_bias)?;
    Ok((h, pre))
}

/// Baseline recurrent step with an unconstrained dense transition matrix.
pub fn srnn_cell(
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
    hidden_bias: &[f64],
    activation: Activation,
    h_prev: &[f64],
    x_t: &[f64],
) -> Result<Vec<f64>> {
    let n = w.nrows();
    if !w.is_square() || h_prev.len() != n || v.nrows() != n || v.ncols() != x_t.len() {
        return Err(Error::Shape("dense cell dimensions disagree".into()));
    }
    let mut pre = dense_matvec(w, h_prev, &mut crate::flops::NoFlops);
    let vx = v * nalgebra::DVector::from_column_slice(x_t);
    for (p, d) in pre.iter_mut().zip(vx.iter()) {
        *p += d;
    }
    if activation != Activation::ModReluReal {
        if hidden_bias.len() != n {
            return Err(Error::Shape("hidden bias length".into()));
        }
        for (p, b) in pre.iter_mut().zip(hidden_bias) {
            *p += b;
        }
    }
    activation.apply(&pre, hidden_bias)
}

/// Dense `W h` with `n^2` multiplies and `n(n - 1)` adds.
pub fn dense_matvec<F: crate::flops::FlopSink>(w: &DMatrix<f64>, h: &[f64], flops: &mut F) -> Vec<f64> {
    let (rows, cols) = w.shape();
    let mut out = vec![0.0; rows];
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = w[(r, 0)] * h[0];
        for c in 1..cols {
            acc += w[(r, c)] * h[c];
        }
        *o = acc;
    }
    flops.record((rows * (2 * cols - 1)) as u64);
    out
}

/// Dense backward step: returns `W' g` and adds `g h'` into `d_w`
/// (`2n^2 - n` plus `n^2` flops).
pub fn dense_backward<F: crate::flops::FlopSink>(
    w: &DMatrix<f64>,
    h_prev: &[f64],
    g: &[f64],
    d_w: &mut DMatrix<f64>,
    flops: &mut F,
) -> Vec<f64> {
    let n = w.nrows();
    let mut out = vec![0.0; n];
    for (c, o) in out.iter_mut().enumerate() {
        let mut acc = w[(0, c)] * g[0];
        for r in 1..n {
            acc += w[(r, c)] * g[r];
        }
        *o = acc;
    }
    flops.record((n * (2 * n - 1)) as u64);
    for c in 0..n {
        for r in 0..n {
            d_w[(r, c)] = g[r] * h_prev[c];
        }
    }
    flops.record((n * n) as u64);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::{closed_form, FlopCounter};
    use crate::householder::materialize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_input_identity_activation_is_pure_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = OrnnParams::init(6, 3, 2, 1, Activation::Identity, &mut rng).unwrap();
        p.v.fill(0.0);
        let h: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let (h1, _) = cell_forward(&p, &h, &[0.3, 0.9]).unwrap();
        assert_eq!(h1, chain_matvec(&p.stack, &h).unwrap().0);
    }

    #[test]
    fn zero_state_sees_only_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = OrnnParams::init(5, 2, 3, 1, Activation::LeakyRelu, &mut rng).unwrap();
        p.hidden_bias = vec![0.1, -0.2, 0.3, -0.4, 0.0];
        let x = [1.0, -2.0, 0.5];
        let (h, _) = cell_forward(&p, &[0.0; 5], &x).unwrap();
        let mut pre = (&p.v * nalgebra::DVector::from_column_slice(&x)).as_slice().to_vec();
        for (a, b) in pre.iter_mut().zip(&p.hidden_bias) {
            *a += b;
        }
        let expect = crate::model::leaky_relu(&pre);
        for i in 0..5 {
            assert!((h[i] - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::LeakyRelu, Activation::ModReluReal, Activation::Identity] {
            let p = OrnnParams::init(8, 4, 3, 2, act, &mut rng).unwrap();
            let w = materialize(&p.stack);
            let h: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
            let x = [0.2, -0.7, 1.3];
            let (a, _) = cell_forward(&p, &h, &x).unwrap();
            let b = srnn_cell(&w, &p.v, &p.hidden_bias, act, &h, &x).unwrap();
            for i in 0..8 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_identity_cell() {
        let w = DMatrix::identity(3, 3);
        let v = DMatrix::zeros(3, 1);
        let h = [1.0, -2.0, 3.0];
        assert_eq!(
            srnn_cell(&w, &v, &[0.0; 3], Activation::Identity, &h, &[5.0]).unwrap(),
            h.to_vec()
        );
    }

    #[test]
    fn dense_flop_counts() {
        let n = 37;
        let w = DMatrix::from_element(n, n, 0.5);
        let h = vec![1.0; n];
        let mut fp = FlopCounter::default();
        dense_matvec(&w, &h, &mut fp);
        assert_eq!(fp.get(), closed_form::dense_forward(n as u64));
        let mut bp = FlopCounter::default();
        let mut dw = DMatrix::zeros(n, n);
        dense_backward(&w, &h, &h, &mut dw, &mut bp);
        assert_eq!(bp.get(), closed_form::dense_backward(n as u64));
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = OrnnParams::init(4, 2, 2, 1, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(cell_forward(&p, &[0.0; 4], &[1.0]), Err(Error::Shape(_))));
        assert!(OrnnParams::init(5, 2, 1, 1, Activation::ModReluReal, &mut rng).is_err());
    }
}
