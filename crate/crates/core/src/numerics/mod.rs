//! Dense tensors and tape-based reverse-mode differentiation.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use params::{Linear, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
