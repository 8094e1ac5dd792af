//! Dense `f64` tensors with tape-based reverse-mode differentiation.

pub mod checkpoint;
pub mod gradcheck;
pub(crate) mod kernels;
pub mod nn;
pub mod ops;
pub mod param;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use param::{Module, Parameter};
pub use tensor::{Tape, Tensor};
