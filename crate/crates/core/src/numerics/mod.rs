//! Dense linear algebra and the reverse-mode gradient tape.

mod matrix;
mod tape;

pub use matrix::DenseMatrix;
pub use tape::{softmax_rows, Gradients, Tape, VarId};
