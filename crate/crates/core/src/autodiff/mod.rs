//! Minimal reverse-mode differentiation over dense tensors: the op set the
//! summarization network needs, an adaptive-moment optimizer, parameter
//! containers, and a finite-difference checker.

mod adam;
mod gradcheck;
mod gru;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{gru_block_shapes, gru_cell, GRU_BLOCKS};
pub use ops::{Activation, PoolMode};
pub use params::{
    params_from_bytes, params_to_bytes, read_params, write_params, GradStore, ParamSet,
    FORMAT_VERSION, MAGIC,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
