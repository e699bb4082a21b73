//! Gradients through the reflection chain: the fused per-step kernel,
//! closed-form and finite-difference oracles, and BPTT over sequences.

mod bptt;
mod kernel;
mod oracles;

pub use crate::householder::ForwardTape;
pub use bptt::{batch_norms, bptt, evaluate, BpttOutput, Evaluation, StorageMode};
pub use kernel::{
    backward, backward_recompute, fused_step_unmasked, local_fpbp, local_fpbp_with, GradientBundle,
};
pub use oracles::{finite_diff_grad, grad_formulas, grad_formulas_faulty, relative_error, FD_EPS};
