//! Dense matrices, a gradient tape over the primitives the model uses,
//! Adam, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod matrix;
pub mod param;
pub mod tape;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use matrix::DenseMatrix;
pub use param::{adam_step, AdamConfig, ParamId, ParamStore, ParamTensor};
pub use tape::{softmax_rows, BatchStats, Gradients, NormMode, Tape, Var};
