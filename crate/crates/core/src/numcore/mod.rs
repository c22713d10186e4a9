//! Numerical substrate: dense and sparse matrices, a gradient tape, gradient
//! checking and a seeded random stream.

mod dense;
mod gradcheck;
mod rng;
mod sparse;
mod tape;

pub use dense::{dot, norm, softmax_in_place, DenseMatrix};
pub use gradcheck::{
    compare_with_central_differences, grad_check, value_and_grad, GradCheckReport, DEFAULT_EPS,
};
pub use rng::Rng;
pub use sparse::SparseMatrix;
pub use tape::{cosine, Gradients, Tape, Var};
