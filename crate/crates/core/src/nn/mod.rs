//! Minimal reverse-mode autodiff on dense `f64` tensors.
//!
//! A [`Graph`] is a flat tape: every operation appends a node holding its
//! forward value and enough context to push gradients back to its inputs.
//! Node ids are topologically ordered by construction, so backward is a
//! single reverse scan. Everything is `f64`; the models here are desk-scale
//! and the finite-difference test suite wants the headroom.

mod adam;
mod graph;
mod init;
mod param;
mod tensor;

pub use adam::Adam;
pub use graph::{BnMode, BnUpdate, Gradients, Graph, NodeId};
pub use init::{
    codebook_init, kaiming_normal, register_bn, register_conv, register_conv_t, register_prelu,
};
pub use param::{apply_bn_updates, Forward, ParamSet, PRELU_SLOPE_INIT};
pub use tensor::Tensor;
