//! Dense matrices and reverse-mode differentiation.

pub mod gradcheck;
pub mod mat;
pub mod tape;

pub use gradcheck::grad_check;
pub use mat::{argmax, logsumexp, Mat};
pub use tape::{Adjacency, Gradients, Tape, Var};
