//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor) values.

mod gradcheck;
mod param;
mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};

pub(crate) use tape::Op;
