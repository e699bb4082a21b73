//! The orthogonal RNN cell, a dense baseline, losses and the optimizer.

mod activation;
pub mod losses;
mod optim;
mod params;

use nalgebra::DMatrix;

pub use activation::{leaky_relu, Activation};
pub use optim::{
    adam_step, adam_update, project_constraints, project_stack, snap_sign, AdamConfig, AdamState,
};
pub use params::{
    cell_forward, dense_backward, dense_matvec, srnn_cell, OrnnParams, TENSOR_NAMES,
};

/// Gradients for every trainable tensor of [`OrnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub d_u: DMatrix<f64>,
    pub d_v: DMatrix<f64>,
    pub d_y: DMatrix<f64>,
    pub d_hidden_bias: Vec<f64>,
    pub d_output_bias: Vec<f64>,
    /// Always zero; the sign factor is not trained.
    pub d_sign: f64,
}

impl ModelGrads {
    pub fn zeros_like(params: &OrnnParams) -> Self {
        Self {
            d_u: DMatrix::zeros(params.n(), params.stack.cols()),
            d_v: DMatrix::zeros(params.v.nrows(), params.v.ncols()),
            d_y: DMatrix::zeros(params.y.nrows(), params.y.ncols()),
            d_hidden_bias: vec![0.0; params.hidden_bias.len()],
            d_output_bias: vec![0.0; params.output_bias.len()],
            d_sign: 0.0,
        }
    }

    /// Flat views ordered as [`TENSOR_NAMES`].
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.d_u.as_slice(),
            self.d_v.as_slice(),
            self.d_y.as_slice(),
            &self.d_hidden_bias,
            &self.d_output_bias,
        ]
    }
}
