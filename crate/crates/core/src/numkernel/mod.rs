//! Dense/sparse kernels and the differentiation tape.

pub mod dense;
pub mod fd;
pub mod sparse;
pub mod tape;

pub use dense::DenseMatrix;
pub use fd::{finite_diff_grad, max_relative_error, relative_error};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, OpKind, Tape, Var};
