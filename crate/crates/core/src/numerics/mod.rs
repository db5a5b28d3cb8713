//! Dense `f64` matrices and a tape-based reverse-mode differentiator.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use tape::{sigmoid, Gradients, Tape, Var, PROB_EPS};
pub use tensor::{Axis, Tensor};
