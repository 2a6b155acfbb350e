//! Soft-attention blocks for convolutional image classifiers, built on a
//! small tape-based reverse-mode autodiff core.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix the scalar type for common use.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod data;
mod error;
pub mod nn;
mod rng;
mod scalar;
mod tensor;
pub mod train;
pub mod viz;

pub use attention::{
    sa_forward, sa_integrate, upsample_alpha, KernelExtent, SoftAttentionConfig, SoftAttentionOutput,
    SoftAttentionState,
};
pub use autodiff::{finite_diff_check, GradCheckReport, Gradients, ParamId, ParamStore, Tape, Var};
pub use error::{Error, Result};
pub use nn::Mode;
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type ModelGraph64 = train::ModelGraph<f64>;
pub type ModelGraph32 = train::ModelGraph<f32>;
pub type Sample64 = data::Sample<f64>;
