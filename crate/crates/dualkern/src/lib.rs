//! Compositional kernels and their random-network realizations.
//!
//! A computation skeleton (a DAG with activation-labeled internal nodes and
//! one output) defines an analytic kernel — inner products at the inputs,
//! then alternating averages and dual activations up the graph — and a
//! family of networks obtained by replicating each internal node and
//! drawing variance-normalized Gaussian weights. The crate computes the
//! dual activations and kernels exactly, realizes and initializes the
//! networks deterministically, and measures how fast the random networks'
//! empirical kernels concentrate around the analytic one.

pub mod activations;
pub mod compkernel;
pub mod experiments;
pub mod numeric;
pub mod realization;
pub mod skeleton;
