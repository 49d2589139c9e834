//! Dense tensors, a reverse-mode tape and Adam.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport, NORM_FLOOR, REL_ERR_FLOOR};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::{matmul, Scalar, Tensor, TensorError};
