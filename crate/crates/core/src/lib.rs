//! Orthogonal recurrent networks with transition matrices parametrised by
//! Householder reflections.
//!
//! * [`householder`]: reflection stacks, the forward chain, compact WY form
//!   and the constructive QR decomposition.
//! * [`backprop`]: the fused forward/backward kernel, gradient oracles and
//!   back-propagation through time.
//! * [`unitary`]: complex reflection chains and their real lift.
//! * [`model`], [`tasks`], [`train`]: the recurrent cell, synthetic tasks and
//!   the training loop.
//! * [`bench`], [`gradcheck`], [`cli`]: benchmarking, gradient checking and
//!   the command-line front end.

pub mod backprop;
pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod flops;
pub mod gradcheck;
pub mod householder;
pub mod io;
pub mod model;
pub mod tasks;
pub mod train;
pub mod unitary;

pub use error::{Error, Result};
