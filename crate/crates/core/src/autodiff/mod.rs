//! Reverse-mode automatic differentiation over dense 2-D `f64` tensors.
//!
//! A [`Graph`] records operations as they are applied; [`Graph::backward`]
//! walks the tape once in reverse and writes parameter gradients into a
//! [`ParamStore`], which also carries Adam state and serializes to a flat
//! JSON checkpoint. Shapes are explicit: the only broadcast is a `1 × 1`
//! operand in [`Graph::add_scalar`] and [`Graph::mul_scalar`].

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use graph::{Axis, Graph, Var};
pub use params::{AdamConfig, Checkpoint, CheckpointEntry, ParamStore};
pub use tensor::Tensor;
