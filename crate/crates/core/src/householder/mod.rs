//! Matrix-free products of Householder reflections.
//!
//! `W = H_n(u_n) ... H_{n-m+1}(u_{n-m+1})`, times `H_1(u1)` on the right when
//! `m = n`. Every `W` built this way is orthogonal, and with `m = n` every
//! orthogonal matrix is reachable (see [`decompose_orthogonal`]).

mod chain;
mod dense;
mod qr;
mod stack;
mod wy;

pub use chain::{chain_matvec, forward, shared_norms, ForwardTape};
pub use dense::{householder_matrix, materialize, orthogonality_error};
pub use qr::{decompose_orthogonal, qr_decompose, qr_residual, ALIGNED_TOL, RANK_TOL};
pub use stack::{reflect_apply, ReflectionStack, EPS_MIN};
pub use wy::{build_compact_wy, wy_mask, wy_matvec, CompactWY};
