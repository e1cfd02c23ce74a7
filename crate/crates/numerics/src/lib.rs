//! Dense `f64` tensor arithmetic with tape-based reverse-mode
//! differentiation, a finite-difference checking harness, and the small set of
//! neural-network layers the encoder, projector and teacher are built from.

pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod optim;
mod ops;
mod tape;
mod tensor;

pub use error::{NumericsError, Result};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use ops::{BackwardRule, LAYER_NORM_EPS};
pub use tape::{AttentionMask, DiffTensor, SharedMask, Tape, Var};
pub use tensor::Tensor;
